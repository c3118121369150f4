/**
 * Thin HTTP client for the session service.
 *
 * Action posts carry a client-generated action id: a retry after a network
 * failure reuses the id, and the client drops its own duplicate submission
 * instead of posting twice. (The transcript itself is already idempotent:
 * server records deduplicate by event_id.)
 */

import type { SessionOpened, SessionRecord, StudentActionWire, StudentCreated } from "./wire.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class TutorClient {
  private submitted = new Set<string>();

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = (await response.json()).detail ?? detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ServiceError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  createStudent(courseId: string, answers: Record<string, string>): Promise<StudentCreated> {
    return this.request("POST", "/students", { course_id: courseId, answers });
  }

  createSession(studentId: string, courseId: string, variant = "full_its"): Promise<SessionOpened> {
    return this.request("POST", "/sessions", {
      student_id: studentId,
      course_id: courseId,
      variant,
    });
  }

  /**
   * Post one action. `actionId` is the idempotency key: a second call with
   * an id that already succeeded resolves to an empty batch instead of
   * re-posting.
   */
  async postAction(
    sessionId: string,
    action: StudentActionWire,
    actionId: string,
  ): Promise<SessionRecord[]> {
    if (this.submitted.has(actionId)) return [];
    const result = await this.request<{ events: SessionRecord[] }>(
      "POST",
      `/sessions/${sessionId}/actions`,
      action,
    );
    this.submitted.add(actionId);
    return result.events;
  }

  async pollEvents(sessionId: string, since: number): Promise<SessionRecord[]> {
    const result = await this.request<{ events: SessionRecord[] }>(
      "GET",
      `/sessions/${sessionId}/events?since=${since}`,
    );
    return result.events;
  }

  async getCourse(courseId: string): Promise<{ id: string; title: string; skills: { id: string; name: string }[] }> {
    return this.request("GET", `/courses/${courseId}`);
  }
}
