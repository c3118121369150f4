/**
 * Wire schema for the session service, mirrored field-for-field.
 *
 * Every transcript record arrives as {event_id, author, payload}; payload
 * kinds beyond the ones listed here must still render (fallback text),
 * so TutorEventKind is a union of knowns plus plain string.
 */

export const TUTOR_EVENT_KINDS = [
  "show_problem",
  "feedback_correct",
  "feedback_incorrect",
  "intervention",
  "ask_retry",
  "ask_follow_up",
  "exercise_complete",
  "show_video",
  "session_done",
] as const;

export type KnownTutorEventKind = (typeof TUTOR_EVENT_KINDS)[number];

export interface TutorEventWire {
  kind: string; // a KnownTutorEventKind, or something newer than this client
  exercise_id?: string;
  text?: string;
  about?: "attempt" | "mcq_option" | "follow_up";
  intervention_kind?: string;
  payload_index?: number;
  options?: string[];
  outcome?: "solved" | "skipped" | "exhausted";
  unit_id?: string;
  url?: string;
  duration_s?: number;
  timestamp?: number;
}

export type ActionKind =
  | "attempt"
  | "ask_help"
  | "skip"
  | "select_option"
  | "follow_up_reply";

export interface StudentActionWire {
  kind: ActionKind | string;
  text?: string;
  option_index?: number;
}

/** One line of GET /sessions/{id}/events. */
export interface SessionRecord {
  event_id: number;
  author: "tutor" | "student";
  payload: TutorEventWire | StudentActionWire;
}

export interface SessionOpened {
  session_id: string;
  events: SessionRecord[];
}

export interface StudentCreated {
  student_id: string;
  selected_skills: string[];
  proficiency: Record<string, number>;
}
