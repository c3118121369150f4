"""JSON wire schema for tutor events, student actions, and log records.

One event-log line is a single JSON object, UTF-8, newline-terminated.
Record types:

  ``student_created``  questionnaire payload; event_id 0, no session
  ``course_uploaded``  full course document; event_id 0, no session
  ``session_created``  variant + course binding; event_id 1 in its session
  ``tutor_event``      one TutorEvent, session-scoped
  ``student_action``   one StudentAction, session-scoped

Session-scoped records share a single per-session event_id sequence with
no gaps, which is what makes replay able to detect truncation.
"""

from __future__ import annotations

import json
from typing import Any

from .content import InterventionKind
from .fsm import (
    ActionKind,
    EventKind,
    FeedbackAbout,
    Outcome,
    StudentAction,
    TutorEvent,
)

# Service-level event kinds that exist outside one exercise's FSM.
SHOW_VIDEO = "show_video"
SESSION_DONE = "session_done"


def event_to_wire(event: TutorEvent) -> dict[str, Any]:
    doc: dict[str, Any] = {"kind": event.kind.value, "exercise_id": event.exercise_id}
    if event.text is not None:
        doc["text"] = event.text
    if event.about is not None:
        doc["about"] = event.about.value
    if event.intervention_kind is not None:
        doc["intervention_kind"] = event.intervention_kind.value
        doc["payload_index"] = event.payload_index
    if event.options is not None:
        doc["options"] = list(event.options)
    if event.context is not None:
        doc["context"] = event.context
    if event.outcome is not None:
        doc["outcome"] = event.outcome.value
    if event.timestamp is not None:
        doc["timestamp"] = event.timestamp
    return doc


def event_from_wire(doc: dict[str, Any]) -> TutorEvent:
    return TutorEvent(
        kind=EventKind(doc["kind"]),
        exercise_id=doc.get("exercise_id", ""),
        text=doc.get("text"),
        about=FeedbackAbout(doc["about"]) if "about" in doc else None,
        intervention_kind=(
            InterventionKind(doc["intervention_kind"]) if "intervention_kind" in doc else None),
        payload_index=doc.get("payload_index"),
        options=tuple(doc["options"]) if "options" in doc else None,
        context=list(doc["context"]) if "context" in doc else None,
        outcome=Outcome(doc["outcome"]) if "outcome" in doc else None,
        timestamp=doc.get("timestamp"),
    )


def action_to_wire(action: StudentAction) -> dict[str, Any]:
    doc: dict[str, Any] = {"kind": action.kind.value}
    if action.text is not None:
        doc["text"] = action.text
    if action.option_index is not None:
        doc["option_index"] = action.option_index
    return doc


def action_from_wire(doc: dict[str, Any]) -> StudentAction:
    return StudentAction(
        kind=ActionKind(doc["kind"]),
        text=doc.get("text"),
        option_index=doc.get("option_index"),
    )


def video_event_wire(unit_id: str, url: str, duration_s: float) -> dict[str, Any]:
    return {"kind": SHOW_VIDEO, "unit_id": unit_id, "url": url, "duration_s": duration_s}


def session_done_wire() -> dict[str, Any]:
    return {"kind": SESSION_DONE}


def record_line(record: dict[str, Any]) -> str:
    """Canonical single-line encoding of one log record."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"
