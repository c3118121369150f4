/**
 * Transcript state: a pure fold over session records.
 *
 * The transcript is a function of the event stream and nothing else, so a
 * reload that replays GET /events?since=0 reconstructs it exactly. Records
 * are deduplicated by event_id (polling may redeliver) and kept in
 * event_id order regardless of arrival order.
 */

import type { SessionRecord, StudentActionWire, TutorEventWire } from "./wire.js";

export type Rendering =
  | "Text"
  | "ProblemCard"
  | "MCQOptions"
  | "HintBubble"
  | "ConceptTreeImage"
  | "VideoCard"
  | "CompletionBanner";

export interface TranscriptItem {
  eventId: number;
  author: "Tutor" | "Student";
  rendering: Rendering;
  text: string;
  options?: string[];
  exerciseId?: string;
  outcome?: string;
  /** set on optimistic items that the server rejected */
  failed?: boolean;
}

const OUTCOME_LABEL: Record<string, string> = {
  solved: "Exercise solved. Nice work!",
  skipped: "Exercise skipped.",
  exhausted: "Out of attempts. On to the next one.",
};

/** Total mapping: every tutor event kind renders, unknown kinds fall back to text. */
export function renderTutorEvent(eventId: number, payload: TutorEventWire): TranscriptItem {
  const base = { eventId, author: "Tutor" as const, exerciseId: payload.exercise_id };
  switch (payload.kind) {
    case "show_problem":
      if (payload.options && payload.options.length > 0) {
        return { ...base, rendering: "MCQOptions", text: payload.text ?? "", options: payload.options };
      }
      return { ...base, rendering: "ProblemCard", text: payload.text ?? "" };
    case "intervention":
      if (payload.options && payload.options.length > 0) {
        return { ...base, rendering: "MCQOptions", text: payload.text ?? "", options: payload.options };
      }
      if (payload.intervention_kind === "concept_tree") {
        return { ...base, rendering: "ConceptTreeImage", text: payload.text ?? "" };
      }
      return { ...base, rendering: "HintBubble", text: payload.text ?? "" };
    case "show_video":
      return {
        ...base,
        rendering: "VideoCard",
        text: payload.url ?? payload.unit_id ?? "video",
      };
    case "exercise_complete":
      return {
        ...base,
        rendering: "CompletionBanner",
        text: OUTCOME_LABEL[payload.outcome ?? ""] ?? "Exercise complete.",
        outcome: payload.outcome,
      };
    case "session_done":
      return { ...base, rendering: "CompletionBanner", text: "That is the end of your curriculum for now." };
    case "feedback_correct":
    case "feedback_incorrect":
    case "ask_retry":
    case "ask_follow_up":
      return { ...base, rendering: "Text", text: payload.text ?? "" };
    default:
      // forward compatibility: an unrecognized kind still shows up as text
      return { ...base, rendering: "Text", text: payload.text ?? `[${payload.kind}]` };
  }
}

export function renderStudentAction(eventId: number, payload: StudentActionWire): TranscriptItem {
  const base = { eventId, author: "Student" as const };
  switch (payload.kind) {
    case "attempt":
    case "follow_up_reply":
      return { ...base, rendering: "Text", text: payload.text ?? "" };
    case "ask_help":
      return { ...base, rendering: "Text", text: "Can I get a hint?" };
    case "skip":
      return { ...base, rendering: "Text", text: "Skip this exercise." };
    case "select_option":
      return { ...base, rendering: "Text", text: `Option ${(payload.option_index ?? 0) + 1}` };
    default:
      return { ...base, rendering: "Text", text: `[${payload.kind}]` };
  }
}

export function renderRecord(record: SessionRecord): TranscriptItem {
  return record.author === "student"
    ? renderStudentAction(record.event_id, record.payload as StudentActionWire)
    : renderTutorEvent(record.event_id, record.payload as TutorEventWire);
}

export class Transcript {
  private items: TranscriptItem[] = [];
  private seen = new Set<number>();

  /** Append records once each, keeping event_id order; returns new items. */
  ingest(records: SessionRecord[]): TranscriptItem[] {
    const added: TranscriptItem[] = [];
    for (const record of records) {
      if (this.seen.has(record.event_id)) continue;
      this.seen.add(record.event_id);
      added.push(renderRecord(record));
    }
    if (added.length === 0) return added;
    this.items = [...this.items, ...added].sort((a, b) => a.eventId - b.eventId);
    return added;
  }

  all(): readonly TranscriptItem[] {
    return this.items;
  }

  get lastEventId(): number {
    return this.items.length ? this.items[this.items.length - 1].eventId : 0;
  }
}
