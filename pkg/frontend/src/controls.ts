/**
 * Project the action controls the UI may offer from the raw record stream.
 *
 * The server is authoritative about legality; this projection mirrors its
 * state machine so the controls shown are always a subset of the legal
 * actions: free-text attempts (plus help and skip) while a problem or a
 * retry prompt is open, option clicks while multiple-choice options are
 * open, reply-or-skip while a follow-up question is open, nothing once the
 * session is done.
 */

import type { ActionKind, SessionRecord, TutorEventWire } from "./wire.js";

export interface ControlState {
  enabled: ActionKind[];
  /** present when select_option is enabled: the active options */
  options?: string[];
  waiting: boolean; // true when the next move is the tutor's (or session over)
}

const NONE: ControlState = { enabled: [], waiting: true };

export function deriveControls(records: SessionRecord[]): ControlState {
  let quizOptions: string[] | undefined; // options of a quiz-form problem
  let currentExercise: string | undefined;
  let state: ControlState = NONE;

  for (const record of records) {
    if (record.author !== "tutor") continue;
    const ev = record.payload as TutorEventWire;
    switch (ev.kind) {
      case "show_problem":
        currentExercise = ev.exercise_id;
        if (ev.options && ev.options.length > 0) {
          quizOptions = ev.options;
          state = { enabled: ["select_option"], options: ev.options, waiting: false };
        } else {
          quizOptions = undefined;
          state = { enabled: ["attempt", "ask_help", "skip"], waiting: false };
        }
        break;
      case "intervention":
        if (ev.options && ev.options.length > 0) {
          state = { enabled: ["select_option"], options: ev.options, waiting: false };
        }
        break;
      case "ask_retry":
        state = quizOptions
          ? { enabled: ["select_option"], options: quizOptions, waiting: false }
          : { enabled: ["attempt", "ask_help", "skip"], waiting: false };
        break;
      case "ask_follow_up":
        state = { enabled: ["follow_up_reply", "skip"], waiting: false };
        break;
      case "exercise_complete":
        if (ev.exercise_id === currentExercise) {
          quizOptions = undefined;
          state = NONE;
        }
        break;
      case "session_done":
        return NONE;
      default:
        break; // feedback and unknown kinds do not change the controls
    }
  }
  return state;
}
