"""Append-only JSON-Lines event log and policy replay.

The log is the single source of truth: profiles, curriculum cursors, and
the policy model are all reconstructible from it. Records are written one
per line (see wire module for the schema); per-session event ids must be
gapless, which is how truncation and tampering get detected.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .content import InterventionKind
from .policy import PolicyModel, update_policy


class CorruptLogError(Exception):
    """The log cannot be parsed or has a per-session event-id gap."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EventLogWriter:
    """Appends records as single JSON lines, flushed per write."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, record: dict) -> None:
        from .wire import record_line
        self._fh.write(record_line(record))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_records(path: str | Path) -> Iterator[dict]:
    """Yield records, enforcing parseability and gapless session sequences."""
    last_seen: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                raise CorruptLogError("blank line inside the log", line_number)
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLogError(f"invalid JSON ({exc.msg})", line_number) from exc
            session_id = record.get("session_id")
            event_id = record.get("event_id")
            if session_id and isinstance(event_id, int):
                expected = last_seen.get(session_id, 0) + 1
                if event_id != expected:
                    raise CorruptLogError(
                        f"session '{session_id}' jumps from event {expected - 1} "
                        f"to {event_id}", line_number)
                last_seen[session_id] = event_id
            yield record


def extract_policy_triples(
    records: Iterable[dict],
) -> Iterator[tuple[list[float], InterventionKind, int]]:
    """(context, kind, reward) stream in resolution order.

    Only context-bearing intervention events train the policy (forced
    reveals carry no context). Rewards resolve at the next graded attempt
    on the same exercise, or as 0 when the exercise completes first.
    """
    open_instances: dict[tuple[str, str], list[tuple[list[float], InterventionKind]]] = {}
    for record in records:
        if record.get("type") != "tutor_event":
            continue
        payload = record.get("payload", {})
        kind = payload.get("kind")
        key = (record.get("session_id", ""), payload.get("exercise_id", ""))
        if kind == "intervention" and payload.get("context") is not None:
            open_instances.setdefault(key, []).append(
                (list(payload["context"]), InterventionKind(payload["intervention_kind"])))
        elif kind in ("feedback_correct", "feedback_incorrect") and payload.get("about") == "attempt":
            reward = 1 if kind == "feedback_correct" else 0
            for ctx, ikind in open_instances.pop(key, []):
                yield ctx, ikind, reward
        elif kind == "exercise_complete":
            for ctx, ikind in open_instances.pop(key, []):
                yield ctx, ikind, 0


def replay_log(records: Iterable[dict], model: PolicyModel | None = None) -> PolicyModel:
    """Fold every logged reward into a policy model.

    Applying this to a live run's log rebuilds the online-updated model
    bit for bit, because updates are pure arithmetic over the same
    (context, kind, reward) stream in the same order.
    """
    model = model if model is not None else PolicyModel()
    for ctx, kind, reward in extract_policy_triples(records):
        update_policy(model, ctx, kind, reward)
    return model


def replay_log_file(path: str | Path, model: PolicyModel | None = None) -> PolicyModel:
    return replay_log(read_records(path), model)
