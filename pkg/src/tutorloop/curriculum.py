"""Outer loop: build each student's initial curriculum and serve units.

The curriculum is generated once from the student's skill selection and
background answers and never reordered afterwards; the outer loop just
walks the cursor forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .content import Course, UnitKind, topological_skill_order


class Background(str, Enum):
    NONE = "none"
    SOME = "some"
    STRONG = "strong"


class UnknownSkillError(Exception):
    pass


@dataclass
class StudentProfile:
    student_id: str
    selected_skill_ids: set[str] = field(default_factory=set)
    background_answers: dict[str, Background] = field(default_factory=dict)
    proficiency: dict[str, float] = field(default_factory=dict)
    sessions_count: int = 0


@dataclass
class Curriculum:
    """Frozen unit order plus a cursor; the order never changes."""

    unit_ids: tuple[str, ...]
    cursor: int = 0

    def next_unit(self) -> str | None:
        """Unit id at the cursor, advancing it; None once exhausted."""
        if self.cursor >= len(self.unit_ids):
            return None
        unit_id = self.unit_ids[self.cursor]
        self.cursor += 1
        return unit_id

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.unit_ids)


def generate_curriculum(course: Course, profile: StudentProfile) -> Curriculum:
    """Personalized unit order for one student.

    Includes every selected skill plus its transitive prerequisites, in
    topological order (lexicographic tie-break, so no seed is needed).
    Skills answered Strong are skipped outright; Some keeps the exercises
    but drops the videos; None (or unanswered) keeps everything. Within a
    skill, units stay in authored order.
    """
    if not profile.selected_skill_ids:
        raise UnknownSkillError("no skills selected")
    known = course.skill_ids()
    unknown = profile.selected_skill_ids - known
    if unknown:
        raise UnknownSkillError(f"unknown skill(s): {sorted(unknown)}")

    prereqs = {s.id: tuple(s.prerequisites) for s in course.skills}
    needed: set[str] = set()
    frontier = sorted(profile.selected_skill_ids)
    while frontier:
        sid = frontier.pop()
        if sid in needed:
            continue
        needed.add(sid)
        frontier.extend(p for p in prereqs.get(sid, ()) if p in known)

    unit_ids: list[str] = []
    for sid in topological_skill_order(course.skills):
        if sid not in needed:
            continue
        answer = profile.background_answers.get(sid, Background.NONE)
        if answer is Background.STRONG:
            continue
        for unit in course.units:
            if unit.skill_id != sid:
                continue
            if answer is Background.SOME and unit.kind is UnitKind.VIDEO:
                continue
            unit_ids.append(unit.unit_id)
    return Curriculum(tuple(unit_ids))
