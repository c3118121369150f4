import { describe, expect, it } from "vitest";

import {
  Transcript,
  renderRecord,
  renderTutorEvent,
} from "../src/transcript.js";
import type { SessionRecord } from "../src/wire.js";

let nextId = 0;
function tutor(payload: Record<string, unknown>): SessionRecord {
  return { event_id: ++nextId, author: "tutor", payload } as SessionRecord;
}
function student(payload: Record<string, unknown>): SessionRecord {
  return { event_id: ++nextId, author: "student", payload } as SessionRecord;
}

describe("renderTutorEvent", () => {
  it("maps every known kind to a rendering", () => {
    const cases: Array<[Record<string, unknown>, string]> = [
      [{ kind: "show_problem", text: "q?" }, "ProblemCard"],
      [{ kind: "show_problem", text: "q?", options: ["a", "b"] }, "MCQOptions"],
      [{ kind: "feedback_correct", text: "yes", about: "attempt" }, "Text"],
      [{ kind: "feedback_incorrect", text: "no", about: "attempt" }, "Text"],
      [{ kind: "intervention", text: "think", intervention_kind: "text_hint" }, "HintBubble"],
      [{ kind: "intervention", text: "x -> y", intervention_kind: "concept_tree" }, "ConceptTreeImage"],
      [{ kind: "intervention", text: "pick", intervention_kind: "multiple_choice", options: ["a", "b"] }, "MCQOptions"],
      [{ kind: "ask_retry", text: "again" }, "Text"],
      [{ kind: "ask_follow_up", text: "why?" }, "Text"],
      [{ kind: "exercise_complete", outcome: "solved" }, "CompletionBanner"],
      [{ kind: "show_video", unit_id: "v1", url: "https://v/1", duration_s: 60 }, "VideoCard"],
      [{ kind: "session_done" }, "CompletionBanner"],
    ];
    for (const [payload, rendering] of cases) {
      expect(renderTutorEvent(1, payload as never).rendering, payload.kind as string).toBe(rendering);
    }
  });

  it("falls back to a text item for unknown kinds", () => {
    const item = renderTutorEvent(1, { kind: "hologram_projection", text: "wow" } as never);
    expect(item.rendering).toBe("Text");
    expect(item.text).toBe("wow");
    const bare = renderTutorEvent(2, { kind: "hologram_projection" } as never);
    expect(bare.text).toContain("hologram_projection");
  });

  it("labels completion banners by outcome", () => {
    expect(renderTutorEvent(1, { kind: "exercise_complete", outcome: "solved" } as never).text)
      .toMatch(/solved/i);
    expect(renderTutorEvent(1, { kind: "exercise_complete", outcome: "skipped" } as never).text)
      .toMatch(/skipped/i);
  });
});

describe("student actions", () => {
  it("renders each action kind as a student text bubble", () => {
    nextId = 0;
    const items = [
      student({ kind: "attempt", text: "my answer" }),
      student({ kind: "ask_help" }),
      student({ kind: "skip" }),
      student({ kind: "select_option", option_index: 1 }),
      student({ kind: "follow_up_reply", text: "because" }),
    ].map(renderRecord);
    expect(items.every((i) => i.author === "Student" && i.rendering === "Text")).toBe(true);
    expect(items[0].text).toBe("my answer");
    expect(items[3].text).toBe("Option 2");
  });
});

describe("Transcript", () => {
  function canonicalFlow(): SessionRecord[] {
    nextId = 0;
    return [
      tutor({ kind: "show_video", unit_id: "v1", url: "https://v/1", duration_s: 60 }),
      tutor({ kind: "show_problem", exercise_id: "e1", text: "what is x?" }),
      student({ kind: "attempt", text: "wrong thing" }),
      tutor({ kind: "feedback_incorrect", about: "attempt", exercise_id: "e1", text: "Not quite." }),
      tutor({ kind: "intervention", intervention_kind: "text_hint", exercise_id: "e1", text: "think again" }),
      tutor({ kind: "ask_retry", exercise_id: "e1", text: "try again" }),
      student({ kind: "attempt", text: "right thing" }),
      tutor({ kind: "feedback_correct", about: "attempt", exercise_id: "e1", text: "Yes." }),
      tutor({ kind: "exercise_complete", exercise_id: "e1", outcome: "solved" }),
      tutor({ kind: "session_done" }),
    ];
  }

  it("renders the canonical attempt-hint-retry-solved sequence", () => {
    const transcript = new Transcript();
    transcript.ingest(canonicalFlow());
    expect(transcript.all().map((i) => i.rendering)).toEqual([
      "VideoCard", "ProblemCard", "Text", "Text", "HintBubble",
      "Text", "Text", "Text", "CompletionBanner", "CompletionBanner",
    ]);
    expect(transcript.all().map((i) => i.author)).toEqual([
      "Tutor", "Tutor", "Student", "Tutor", "Tutor",
      "Tutor", "Student", "Tutor", "Tutor", "Tutor",
    ]);
  });

  it("deduplicates redelivered records by event_id", () => {
    const records = canonicalFlow();
    const transcript = new Transcript();
    transcript.ingest(records.slice(0, 6));
    transcript.ingest(records.slice(2, 8)); // overlap
    transcript.ingest(records); // full redelivery
    expect(transcript.all()).toHaveLength(records.length);
    expect(new Set(transcript.all().map((i) => i.eventId)).size).toBe(records.length);
  });

  it("orders items by event_id even when batches arrive shuffled", () => {
    const records = canonicalFlow();
    const shuffled = [...records].reverse();
    const transcript = new Transcript();
    transcript.ingest(shuffled);
    expect(transcript.all().map((i) => i.eventId)).toEqual(records.map((r) => r.event_id));
  });

  it("reload from since=0 reproduces the incremental transcript exactly", () => {
    const records = canonicalFlow();
    const incremental = new Transcript();
    // arrival in dribs and drabs, with duplicated deliveries along the way
    incremental.ingest(records.slice(0, 2));
    incremental.ingest(records.slice(0, 5));
    incremental.ingest(records.slice(4, 7));
    incremental.ingest(records.slice(5));

    const reloaded = new Transcript();
    reloaded.ingest(records); // GET /events?since=0

    expect(reloaded.all()).toEqual(incremental.all());
    expect(reloaded.lastEventId).toBe(incremental.lastEventId);
  });
});
