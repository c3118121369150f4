/**
 * Browser wiring: questionnaire form, chat transcript, action controls.
 *
 * One session per tab. The transcript renders only what the server said
 * happened: student bubbles are appended optimistically but marked failed
 * (and controls re-synced) when the server rejects the action, and the
 * polling loop reconciles everything by event_id, so a hard reload with
 * ?since=0 reproduces the exact same transcript.
 */

import { TutorClient, ServiceError } from "./client.js";
import { deriveControls } from "./controls.js";
import { Transcript, renderRecord, type TranscriptItem } from "./transcript.js";
import type { ActionKind, SessionRecord, StudentActionWire } from "./wire.js";

const POLL_INTERVAL_MS = 1500;

interface AppState {
  client: TutorClient;
  sessionId: string;
  transcript: Transcript;
  records: SessionRecord[];
  actionSeq: number;
  pendingBubble: HTMLElement | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function bubbleFor(item: TranscriptItem): HTMLElement {
  const bubble = el("div", `bubble ${item.author.toLowerCase()} ${item.rendering.toLowerCase()}`);
  switch (item.rendering) {
    case "MCQOptions": {
      bubble.appendChild(el("p", "body", item.text));
      const list = el("ol", "options");
      for (const option of item.options ?? []) list.appendChild(el("li", "option", option));
      bubble.appendChild(list);
      break;
    }
    case "VideoCard": {
      bubble.appendChild(el("p", "body", "Lecture video"));
      const link = el("a", "video-link", item.text);
      link.setAttribute("href", item.text);
      link.setAttribute("target", "_blank");
      bubble.appendChild(link);
      break;
    }
    case "ConceptTreeImage": {
      bubble.appendChild(el("pre", "concept-tree", item.text));
      break;
    }
    case "CompletionBanner": {
      bubble.appendChild(el("p", "banner", item.text));
      break;
    }
    default:
      bubble.appendChild(el("p", "body", item.text));
  }
  if (item.failed) bubble.classList.add("failed");
  return bubble;
}

function appendItems(state: AppState, items: readonly TranscriptItem[]): void {
  const pane = document.getElementById("chat")!;
  for (const item of items) pane.appendChild(bubbleFor(item));
  pane.scrollTop = pane.scrollHeight;
}

function syncControls(state: AppState): void {
  const controls = deriveControls(state.records);
  const attemptRow = document.getElementById("attempt-row")!;
  const optionRow = document.getElementById("option-row")!;
  const helpButton = document.getElementById("help") as HTMLButtonElement;
  const skipButton = document.getElementById("skip") as HTMLButtonElement;
  const input = document.getElementById("attempt-input") as HTMLInputElement;

  const can = (kind: ActionKind) => controls.enabled.includes(kind);
  attemptRow.style.display = can("attempt") || can("follow_up_reply") ? "" : "none";
  input.placeholder = can("follow_up_reply") ? "Answer the follow-up..." : "Type your solution...";
  helpButton.style.display = can("ask_help") ? "" : "none";
  skipButton.style.display = can("skip") ? "" : "none";

  optionRow.replaceChildren();
  optionRow.style.display = can("select_option") ? "" : "none";
  (controls.options ?? []).forEach((text, index) => {
    const button = el("button", "option-button", text);
    button.addEventListener("click", () => {
      void submit(state, { kind: "select_option", option_index: index });
    });
    optionRow.appendChild(button);
  });
}

function ingest(state: AppState, records: SessionRecord[]): void {
  state.records.push(...records.filter(
    (r) => !state.records.some((have) => have.event_id === r.event_id)));
  state.records.sort((a, b) => a.event_id - b.event_id);
  appendItems(state, state.transcript.ingest(records));
  syncControls(state);
}

async function submit(state: AppState, action: StudentActionWire): Promise<void> {
  const actionId = `a${++state.actionSeq}`;
  const pane = document.getElementById("chat")!;
  const optimistic = bubbleFor(renderRecord({
    event_id: Number.MAX_SAFE_INTEGER,
    author: "student",
    payload: action,
  }));
  optimistic.classList.add("pending");
  pane.appendChild(optimistic);
  state.pendingBubble = optimistic;

  try {
    const events = await state.client.postAction(state.sessionId, action, actionId);
    optimistic.remove(); // the confirmed record replaces the optimistic bubble
    ingest(state, events);
  } catch (error) {
    if (error instanceof ServiceError) {
      optimistic.classList.remove("pending");
      optimistic.classList.add("failed");
      optimistic.title = error.message;
      syncControls(state); // the server refused: re-derive what is allowed
    } else {
      // network trouble: keep the bubble pending and offer a retry
      optimistic.classList.add("retryable");
      optimistic.addEventListener("click", () => {
        optimistic.remove();
        void submit(state, action);
      }, { once: true });
    }
  }
}

async function pollLoop(state: AppState): Promise<void> {
  for (;;) {
    await new Promise((resolve) => setTimeout(resolve, POLL_INTERVAL_MS));
    try {
      const records = await state.client.pollEvents(state.sessionId, state.transcript.lastEventId);
      if (records.length > 0) ingest(state, records);
    } catch {
      // transient poll failure: try again next tick
    }
  }
}

export async function startApp(baseUrl: string): Promise<void> {
  const client = new TutorClient(baseUrl);
  const form = document.getElementById("enroll-form") as HTMLFormElement;
  const courseInput = document.getElementById("course-id") as HTMLInputElement;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      const courseId = courseInput.value.trim() || "ml-basics";
      const course = await client.getCourse(courseId);
      const answers: Record<string, string> = {};
      for (const skill of course.skills) {
        const picked = (document.querySelector(
          `input[name="bg-${skill.id}"]:checked`,
        ) as HTMLInputElement | null)?.value;
        if (picked) answers[skill.id] = picked;
      }
      const student = await client.createStudent(courseId, answers);
      const opened = await client.createSession(student.student_id, courseId);

      document.getElementById("enroll")!.style.display = "none";
      document.getElementById("session")!.style.display = "";

      const state: AppState = {
        client,
        sessionId: opened.session_id,
        transcript: new Transcript(),
        records: [],
        actionSeq: 0,
        pendingBubble: null,
      };
      ingest(state, opened.events);

      const input = document.getElementById("attempt-input") as HTMLInputElement;
      document.getElementById("send")!.addEventListener("click", () => {
        const text = input.value.trim();
        if (!text) return;
        const controls = deriveControls(state.records);
        const kind: ActionKind = controls.enabled.includes("follow_up_reply")
          ? "follow_up_reply"
          : "attempt";
        input.value = "";
        void submit(state, { kind, text });
      });
      document.getElementById("help")!.addEventListener("click", () => {
        void submit(state, { kind: "ask_help" });
      });
      document.getElementById("skip")!.addEventListener("click", () => {
        void submit(state, { kind: "skip" });
      });

      void pollLoop(state);
    })();
  });

  // render the questionnaire rows once the course id is known
  courseInput.addEventListener("change", () => {
    void (async () => {
      try {
        const course = await client.getCourse(courseInput.value.trim());
        const holder = document.getElementById("questionnaire")!;
        holder.replaceChildren();
        for (const skill of course.skills) {
          const row = el("div", "bg-row");
          row.appendChild(el("span", "bg-name", `${skill.name}: `));
          for (const level of ["none", "some", "strong"]) {
            const label = el("label", "bg-choice", level);
            const radio = el("input") as HTMLInputElement;
            radio.type = "radio";
            radio.name = `bg-${skill.id}`;
            radio.value = level;
            if (level === "none") radio.checked = true;
            label.prepend(radio);
            row.appendChild(label);
          }
          holder.appendChild(row);
        }
      } catch {
        // unknown course id: leave the questionnaire empty until corrected
      }
    })();
  });
}
