"""Standalone learning-gain recount over raw event-log records.

Deliberately independent of the engine and the simulator's bookkeeping:
it walks serialized records only, so it can audit any log the system
produced (simulated or live). An intervention instance counts toward the
numerator iff the next graded attempt in the same session-exercise is
correct; instances still pending when the exercise completes count only
in the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


@dataclass
class GainCount:
    numerator: int = 0
    denominator: int = 0
    per_variant: dict[str, tuple[int, int]] = field(default_factory=dict)

    def proportion(self) -> float:
        if self.denominator == 0:
            raise ValueError("no intervention instances in the log")
        return self.numerator / self.denominator


def walk_records(records: Iterable[dict]) -> GainCount:
    """Count (intervention, next-attempt-correct) outcomes from raw records."""
    count = GainCount()
    open_instances: dict[tuple[str, str], int] = {}  # (session, exercise) -> pending

    def bump(variant: str, num: int, den: int) -> None:
        n, d = count.per_variant.get(variant, (0, 0))
        count.per_variant[variant] = (n + num, d + den)

    for record in records:
        if record.get("type") != "tutor_event":
            continue
        payload = record.get("payload", {})
        kind = payload.get("kind")
        session = record.get("session_id", "")
        exercise = payload.get("exercise_id", "")
        key = (session, exercise)
        variant = record.get("variant", "")

        if kind == "intervention":
            open_instances[key] = open_instances.get(key, 0) + 1
            count.denominator += 1
            bump(variant, 0, 1)
        elif kind in ("feedback_correct", "feedback_incorrect") and payload.get("about") == "attempt":
            pending = open_instances.pop(key, 0)
            if pending and kind == "feedback_correct":
                count.numerator += pending
                bump(variant, pending, 0)
        elif kind == "exercise_complete":
            open_instances.pop(key, None)
    return count
