"""Authorable course content: skills, units, exercises, interventions.

A course ships as a directory bundle with a single ``course.json`` document.
Loading is strict by default (unknown keys rejected) so authoring mistakes
surface immediately; ``lenient=True`` drops unknown keys instead. Everything
is immutable after load and safe to share across concurrent sessions.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator


class InterventionKind(str, Enum):
    """The six pedagogical interventions, in fixed tie-break order."""

    TEXT_HINT = "text_hint"
    MATH_HINT = "math_hint"
    ELABORATION = "elaboration"
    EXPLANATION = "explanation"
    CONCEPT_TREE = "concept_tree"
    MULTIPLE_CHOICE = "multiple_choice"


KIND_ORDER: tuple[InterventionKind, ...] = tuple(InterventionKind)


class FollowUp(str, Enum):
    """What the tutor does right after delivering an intervention."""

    RETRY = "retry"
    QUESTION = "question"
    CONFIRMATION = "confirmation"
    PROMPT = "prompt"


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ContentError(Exception):
    """Base class for course bundle failures.

    ``subject_id`` names the offending entity when one is identifiable.
    """

    def __init__(self, message: str, subject_id: str | None = None):
        super().__init__(message)
        self.subject_id = subject_id


class ParseError(ContentError):
    """The file is not valid JSON (carries line/column in the message)."""


class SchemaError(ContentError):
    """A field is missing, has the wrong type, or is unknown in strict mode."""


class IntegrityError(ContentError):
    """Cross-reference or invariant violation in structurally valid content."""


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class MCQOption(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    text: str
    is_correct: bool = False


class InterventionPayload(BaseModel):
    """One authored intervention; ``kind`` comes from its map key."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    kind: InterventionKind
    body: str
    options: tuple[MCQOption, ...] | None = None
    followup: FollowUp = FollowUp.RETRY
    followup_text: str | None = None


class Expectation(BaseModel):
    """A reference solution an attempt is compared against."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str
    text: str
    required_keywords: tuple[str, ...] = ()


class Exercise(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str
    skill_id: str
    problem_statement: str
    expectations: tuple[Expectation, ...]
    interventions: dict[InterventionKind, tuple[InterventionPayload, ...]]

    @model_validator(mode="before")
    @classmethod
    def _inject_payload_kinds(cls, data: object) -> object:
        # authors may omit "kind" inside a payload; the map key supplies it
        if not isinstance(data, dict) or not isinstance(data.get("interventions"), dict):
            return data
        interventions = {}
        for kind, plist in data["interventions"].items():
            if isinstance(plist, (list, tuple)):
                plist = [
                    {**p, "kind": p.get("kind", kind)} if isinstance(p, dict) else p
                    for p in plist
                ]
            interventions[kind] = plist
        return {**data, "interventions": interventions}


class VideoRef(BaseModel):
    """Opaque video record; only the duration matters to the engine."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str
    url: str
    duration_s: float


class UnitKind(str, Enum):
    VIDEO = "video"
    EXERCISE = "exercise"


class Unit(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    kind: UnitKind
    skill_id: str
    payload: VideoRef | Exercise

    @property
    def unit_id(self) -> str:
        return self.payload.id


class Skill(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str
    name: str
    prerequisites: tuple[str, ...] = ()


class Course(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str
    title: str
    skills: tuple[Skill, ...]
    units: tuple[Unit, ...]

    def skill_ids(self) -> set[str]:
        return {s.id for s in self.skills}

    def unit_by_id(self, unit_id: str) -> Unit:
        for unit in self.units:
            if unit.unit_id == unit_id:
                return unit
        raise KeyError(unit_id)

    def exercises(self) -> list[Exercise]:
        return [u.payload for u in self.units if u.kind is UnitKind.EXERCISE]


# ---------------------------------------------------------------------------
# Strict-mode key checking
# ---------------------------------------------------------------------------

_EXPECTED_KEYS = {
    "course": {"id", "title", "skills", "units"},
    "skill": {"id", "name", "prerequisites"},
    "unit": {"kind", "skill_id", "payload"},
    "video": {"id", "url", "duration_s"},
    "exercise": {"id", "skill_id", "problem_statement", "expectations", "interventions"},
    "expectation": {"id", "text", "required_keywords"},
    "payload": {"kind", "body", "options", "followup", "followup_text"},
    "option": {"text", "is_correct"},
}


def _require_keys(obj: object, node: str, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - _EXPECTED_KEYS[node]
    if unknown:
        raise SchemaError(f"{where}: unknown key(s) {sorted(unknown)}")


def _check_unknown_keys(doc: dict) -> None:
    """Reject any key outside the documented schema (strict mode only)."""
    _require_keys(doc, "course", "course")
    for i, skill in enumerate(doc.get("skills") or []):
        _require_keys(skill, "skill", f"skills[{i}]")
    for i, unit in enumerate(doc.get("units") or []):
        _require_keys(unit, "unit", f"units[{i}]")
        if not isinstance(unit, dict):
            continue
        payload = unit.get("payload")
        where = f"units[{i}].payload"
        if unit.get("kind") == "video":
            _require_keys(payload, "video", where)
        elif unit.get("kind") == "exercise":
            _require_keys(payload, "exercise", where)
            if not isinstance(payload, dict):
                continue
            for j, exp in enumerate(payload.get("expectations") or []):
                _require_keys(exp, "expectation", f"{where}.expectations[{j}]")
            interventions = payload.get("interventions")
            if isinstance(interventions, dict):
                for kind_name, plist in interventions.items():
                    for j, p in enumerate(plist or []):
                        _require_keys(p, "payload", f"{where}.interventions[{kind_name}][{j}]")
                        if isinstance(p, dict):
                            for k, opt in enumerate(p.get("options") or []):
                                _require_keys(
                                    opt, "option",
                                    f"{where}.interventions[{kind_name}][{j}].options[{k}]",
                                )


# ---------------------------------------------------------------------------
# Validation findings
# ---------------------------------------------------------------------------


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    message: str
    subject_id: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    def ok(self) -> bool:
        return not self.errors


_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Fewer than this many distinct intervention kinds flags thin coverage.
MIN_KIND_COVERAGE = 4


def _integrity_findings(course: Course) -> list[Finding]:
    findings: list[Finding] = []

    def err(code: str, message: str, subject: str) -> None:
        findings.append(Finding(Severity.ERROR, code, message, subject))

    skill_ids = [s.id for s in course.skills]
    known = set(skill_ids)
    seen: set[str] = set()
    for sid in skill_ids:
        if sid in seen:
            err("duplicate-skill", f"duplicate skill id '{sid}'", sid)
        seen.add(sid)

    for skill in course.skills:
        for pre in skill.prerequisites:
            if pre == skill.id:
                err("self-prerequisite", f"skill '{skill.id}' lists itself as prerequisite", skill.id)
            elif pre not in known:
                err("dangling-prerequisite",
                    f"skill '{skill.id}' requires unknown skill '{pre}'", skill.id)

    cycle = find_prerequisite_cycle(course.skills)
    if cycle:
        err("prerequisite-cycle", "prerequisite cycle: " + "↔".join(cycle), cycle[0])

    unit_ids: set[str] = set()
    for unit in course.units:
        if unit.skill_id not in known:
            err("unknown-skill", f"unit '{unit.unit_id}' references unknown skill '{unit.skill_id}'",
                unit.unit_id)
        if unit.unit_id in unit_ids:
            err("duplicate-unit", f"duplicate unit id '{unit.unit_id}'", unit.unit_id)
        unit_ids.add(unit.unit_id)
        if unit.kind is UnitKind.VIDEO:
            if not isinstance(unit.payload, VideoRef):
                err("kind-payload-mismatch",
                    f"unit '{unit.unit_id}' is a video but carries an exercise payload", unit.unit_id)
            elif unit.payload.duration_s <= 0:
                err("bad-duration", f"video '{unit.unit_id}' has non-positive duration", unit.unit_id)
        else:
            if not isinstance(unit.payload, Exercise):
                err("kind-payload-mismatch",
                    f"unit '{unit.unit_id}' is an exercise but carries a video payload", unit.unit_id)
            else:
                findings.extend(_exercise_findings(unit.payload, unit.skill_id))

    return findings


def _exercise_findings(ex: Exercise, unit_skill_id: str) -> list[Finding]:
    findings: list[Finding] = []

    def err(code: str, message: str) -> None:
        findings.append(Finding(Severity.ERROR, code, message, ex.id))

    if ex.skill_id != unit_skill_id:
        err("skill-mismatch",
            f"exercise '{ex.id}' declares skill '{ex.skill_id}' but its unit says '{unit_skill_id}'")
    if not ex.expectations:
        err("no-expectations", f"exercise '{ex.id}' has no expectations")
    exp_ids: set[str] = set()
    for exp in ex.expectations:
        if exp.id in exp_ids:
            err("duplicate-expectation", f"exercise '{ex.id}' repeats expectation id '{exp.id}'")
        exp_ids.add(exp.id)
        if not _TOKEN_RE.findall(exp.text.lower()):
            err("empty-expectation",
                f"expectation '{exp.id}' of exercise '{ex.id}' is empty after normalization")
    if not ex.interventions:
        err("no-interventions", f"exercise '{ex.id}' has no interventions")
    for kind, payloads in ex.interventions.items():
        if not payloads:
            err("empty-intervention-list", f"exercise '{ex.id}' has an empty {kind.value} list")
        for payload in payloads:
            if payload.kind is not kind:
                err("kind-mismatch",
                    f"exercise '{ex.id}': payload under '{kind.value}' claims '{payload.kind.value}'")
            if kind is InterventionKind.MULTIPLE_CHOICE:
                opts = payload.options or ()
                if len(opts) < 2:
                    err("mcq-too-few-options",
                        f"exercise '{ex.id}': multiple_choice payload needs at least 2 options")
                correct = sum(1 for o in opts if o.is_correct)
                if correct != 1:
                    err("mcq-correct-count",
                        f"exercise '{ex.id}': multiple_choice payload flags {correct} correct options, expected exactly 1")
            elif payload.options is not None:
                err("options-on-non-mcq",
                    f"exercise '{ex.id}': {kind.value} payload must not carry options")
            if payload.followup is FollowUp.RETRY and payload.followup_text is not None:
                err("followup-text-on-retry",
                    f"exercise '{ex.id}': retry followup must not carry followup_text")
            if payload.followup is not FollowUp.RETRY and not payload.followup_text:
                err("missing-followup-text",
                    f"exercise '{ex.id}': {payload.followup.value} followup requires followup_text")

    if 0 < len(ex.interventions) < MIN_KIND_COVERAGE:
        findings.append(Finding(
            Severity.WARNING, "thin-intervention-coverage",
            f"exercise '{ex.id}' covers only {len(ex.interventions)} intervention kind(s); "
            "thin intervention coverage", ex.id))
    return findings


def find_prerequisite_cycle(skills: tuple[Skill, ...]) -> list[str] | None:
    """Return one cycle in the prerequisite graph, or None if it is a DAG.

    Explicit Kahn topological sort; whatever survives has a back edge.
    """
    known = {s.id for s in skills}
    indegree = {s.id: 0 for s in skills}
    dependents: dict[str, list[str]] = {s.id: [] for s in skills}
    for skill in skills:
        for pre in skill.prerequisites:
            if pre in known and pre != skill.id:
                indegree[skill.id] += 1
                dependents[pre].append(skill.id)

    ready = [sid for sid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    ordered = 0
    while ready:
        sid = heapq.heappop(ready)
        ordered += 1
        for dep in dependents[sid]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)

    if ordered == len(indegree):
        return None
    return sorted(sid for sid, deg in indegree.items() if deg > 0)


def topological_skill_order(skills: tuple[Skill, ...]) -> list[str]:
    """Skill ids in prerequisite order, lexicographic tie-break (deterministic)."""
    if find_prerequisite_cycle(skills):
        raise IntegrityError("prerequisite graph has a cycle")
    known = {s.id for s in skills}
    indegree = {s.id: 0 for s in skills}
    dependents: dict[str, list[str]] = {s.id: [] for s in skills}
    for skill in skills:
        for pre in skill.prerequisites:
            if pre in known:
                indegree[skill.id] += 1
                dependents[pre].append(skill.id)
    ready = [sid for sid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        sid = heapq.heappop(ready)
        order.append(sid)
        for dep in dependents[sid]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    return order


# ---------------------------------------------------------------------------
# Load / serialize
# ---------------------------------------------------------------------------


def _describe_pydantic_error(exc: ValidationError) -> str:
    first = exc.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    return f"{loc or '<root>'}: {first['msg']}"


def course_from_dict(doc: object, *, lenient: bool = False) -> Course:
    """Build and integrity-check a Course from already-parsed JSON."""
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    if not lenient:
        _check_unknown_keys(doc)
    try:
        course = Course.model_validate(doc)
    except ValidationError as exc:
        raise SchemaError(_describe_pydantic_error(exc)) from exc

    report = ValidationReport(_integrity_findings(course))
    if report.errors:
        first = report.errors[0]
        raise IntegrityError(first.message, subject_id=first.subject_id)
    return course


def load_course(path: str | Path, *, lenient: bool = False) -> Course:
    """Load a course bundle.

    ``path`` is a bundle directory containing ``course.json`` or the JSON
    file itself. Deterministic for fixed bytes.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "course.json"
    if not path.exists():
        raise ParseError(f"no course document at {path}")
    raw = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return course_from_dict(doc, lenient=lenient)


def course_to_dict(course: Course) -> dict:
    """Plain-JSON form; inverse of ``course_from_dict`` (round-trips)."""
    doc = course.model_dump(mode="json")
    # pydantic emits nulls for unset optionals; drop them for clean authoring diffs
    for unit in doc["units"]:
        payload = unit["payload"]
        if unit["kind"] == "exercise":
            for plist in payload["interventions"].values():
                for p in plist:
                    if p["options"] is None:
                        del p["options"]
                    if p["followup_text"] is None:
                        del p["followup_text"]
    return doc


def serialize_course(course: Course) -> str:
    return json.dumps(course_to_dict(course), indent=2, ensure_ascii=False) + "\n"


def save_course(course: Course, bundle_dir: str | Path) -> Path:
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    target = bundle / "course.json"
    target.write_text(serialize_course(course), encoding="utf-8")
    return target


def validate_course(course: Course) -> ValidationReport:
    """Re-check every invariant as findings rather than exceptions.

    A successfully loaded course always yields zero errors; warnings flag
    authoring smells such as thin intervention coverage.
    """
    return ValidationReport(_integrity_findings(course))
