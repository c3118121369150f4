"""Synthetic students: parameterized agents that take whole tutoring sessions.

A student is a bag of Bernoulli knobs: per-skill proficiency drives attempt
correctness, per-kind responsiveness gives interventions causal power (a
proficiency boost), patience bounds how many consecutive failures are
tolerated before skipping, and a satisfaction model turns the realized
success rate into survey and return draws. Sessions are pure functions of
(model, variant, course, seeds), so populations are embarrassingly parallel
and every run is replayable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .content import Course, Exercise, InterventionKind, UnitKind
from .curriculum import StudentProfile, generate_curriculum
from .fsm import (
    EventKind,
    FeedbackAbout,
    FsmState,
    SessionMode,
    SessionState,
    StepDeps,
    StudentAction,
    TutorEvent,
    start_exercise,
    step,
)
from .matcher import Matcher, correct_option_index
from .policy import PolicyModel, select_intervention, update_policy
from .wire import action_to_wire, event_to_wire, video_event_wire

DEFAULT_SESSION_CAP_S = 2700.0  # questionnaire time in the original protocol
XMOOC_MCQ_RATE = 0.5


class Variant(str, Enum):
    FULL_ITS = "full_its"
    XMOOC_ITS = "xmooc_its"


@dataclass
class StudentModel:
    proficiency: dict[str, float]
    responsiveness: dict[InterventionKind, float]
    patience: int = 2
    guess_rate: float = 0.25
    reading_speed: float = 8.0  # seconds per logged record
    satisfaction_bias: float = 0.5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for skill, p in self.proficiency.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"proficiency[{skill}]={p} outside [0, 1]")
        for kind, delta in self.responsiveness.items():
            if not 0.0 <= delta <= 0.5:
                raise ValueError(f"responsiveness[{kind}]={delta} outside [0, 0.5]")
        if not 0.0 <= self.guess_rate <= 1.0:
            raise ValueError("guess_rate outside [0, 1]")
        if not 0.0 <= self.satisfaction_bias <= 1.0:
            raise ValueError("satisfaction_bias outside [0, 1]")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


def apply_intervention_effect(
    model: StudentModel, kind: InterventionKind, skill: str
) -> StudentModel:
    """New model with the kind's proficiency boost applied to one skill."""
    delta = model.responsiveness.get(kind, 0.0)
    proficiency = dict(model.proficiency)
    proficiency[skill] = min(1.0, proficiency.get(skill, 0.0) + delta)
    return StudentModel(
        proficiency=proficiency,
        responsiveness=model.responsiveness,
        patience=model.patience,
        guess_rate=model.guess_rate,
        reading_speed=model.reading_speed,
        satisfaction_bias=model.satisfaction_bias,
        rng_seed=model.rng_seed,
    )


def distractor_pool(course: Course, exercise: Exercise) -> list[str]:
    """Wrong answers: expectation texts of the other exercises."""
    return [
        exp.text
        for ex in course.exercises() if ex.id != exercise.id
        for exp in ex.expectations
    ]


def simulate_action(
    model: StudentModel,
    pending: TutorEvent,
    rng: random.Random,
    *,
    exercise: Exercise,
    proficiency: float,
    consecutive_failures: int = 0,
    distractors: list[str] | None = None,
) -> StudentAction:
    """One student response to the tutor event awaiting an answer."""
    if pending.kind is EventKind.ASK_FOLLOW_UP:
        if rng.random() < proficiency:
            return StudentAction.follow_up_reply(pending.text or "yes")
        return StudentAction.follow_up_reply("i am not quite sure about that")

    if pending.options is not None:
        # multiple choice: guessing puts a floor under weak students
        payload = exercise.interventions[InterventionKind.MULTIPLE_CHOICE][pending.payload_index or 0]
        correct = correct_option_index(payload)
        if rng.random() < max(proficiency, model.guess_rate):
            return StudentAction.select_option(correct)
        wrong = [i for i in range(len(payload.options or ())) if i != correct]
        return StudentAction.select_option(rng.choice(wrong))

    # a plain problem statement or retry prompt
    if consecutive_failures > model.patience:
        return StudentAction.skip()
    if rng.random() < proficiency:
        return StudentAction.attempt(rng.choice(exercise.expectations).text)
    pool = distractors if distractors else ["i have no idea"]
    return StudentAction.attempt(rng.choice(pool))


@dataclass
class SessionLog:
    """Everything one simulated session produced, replayable and auditable."""

    student_id: str
    session_id: str
    variant: Variant
    records: list[dict] = field(default_factory=list)
    triples: list[tuple[list[float] | None, InterventionKind, int]] = field(default_factory=list)
    total_time_s: float = 0.0
    n_attempts: int = 0
    n_correct: int = 0
    exercises_seen: int = 0
    will_refer: bool = False
    returned: bool = False

    @property
    def success_rate(self) -> float:
        return self.n_correct / self.n_attempts if self.n_attempts else 0.0

    def to_jsonl(self) -> str:
        from .wire import record_line
        return "".join(record_line(r) for r in self.records)


def satisfaction_probability(success_rate: float, bias: float) -> float:
    """P(positive survey/return) = sigmoid(4 * success - 2 + bias)."""
    import math
    z = 4.0 * success_rate - 2.0 + bias
    return 1.0 / (1.0 + math.exp(-z))


def engagement_probability(success_rate: float, bias: float) -> float:
    """P(starting the next exercise unit); much steeper in success than the
    survey model, so struggling students actually leave."""
    import math
    z = 10.0 * (success_rate - 0.5) + bias
    return 1.0 / (1.0 + math.exp(-z))


@dataclass
class SimDeps:
    matcher: Matcher
    policy: PolicyModel
    update_policy_online: bool = True
    session_cap_s: float = DEFAULT_SESSION_CAP_S
    max_interventions: int = 3


class _Recorder:
    """Assigns per-session event ids and simulated timestamps."""

    def __init__(self, log: SessionLog, reading_speed: float):
        self.log = log
        self.reading_speed = reading_speed
        self.event_id = 0
        self.clock = 0.0

    def _base(self, record_type: str) -> dict:
        self.event_id += 1
        return {
            "type": record_type,
            "event_id": self.event_id,
            "session_id": self.log.session_id,
            "student_id": self.log.student_id,
            "variant": self.log.variant.value,
            "ts": self.clock,
        }

    def session_created(self, course_id: str) -> None:
        rec = self._base("session_created")
        rec["payload"] = {"course_id": course_id}
        self.log.records.append(rec)

    def tutor_event(self, event: TutorEvent, extra_s: float = 0.0) -> None:
        self.clock += self.reading_speed + extra_s
        event.timestamp = self.clock
        rec = self._base("tutor_event")
        rec["ts"] = self.clock
        rec["payload"] = event_to_wire(event)
        self.log.records.append(rec)

    def raw_event(self, payload: dict, extra_s: float = 0.0) -> None:
        self.clock += self.reading_speed + extra_s
        rec = self._base("tutor_event")
        rec["ts"] = self.clock
        rec["payload"] = dict(payload, timestamp=self.clock)
        self.log.records.append(rec)

    def student_action(self, action: StudentAction) -> None:
        self.clock += self.reading_speed
        rec = self._base("student_action")
        rec["ts"] = self.clock
        rec["payload"] = action_to_wire(action)
        self.log.records.append(rec)


def _profile_for(model: StudentModel, course: Course, student_id: str) -> StudentProfile:
    # simulated students select everything and claim no background
    return StudentProfile(
        student_id=student_id,
        selected_skill_ids=course.skill_ids(),
        background_answers={},
        proficiency={},
    )


def simulate_session(
    model: StudentModel,
    variant: Variant,
    course: Course,
    deps: SimDeps,
    *,
    rng: random.Random,
    student_id: str = "sim-student",
    session_id: str = "sim-session",
) -> SessionLog:
    """Outer loop plus inner loop, end to end, for one student session."""
    log = SessionLog(student_id=student_id, session_id=session_id, variant=variant)
    rec = _Recorder(log, model.reading_speed)
    rec.session_created(course.id)

    profile = _profile_for(model, course, student_id)
    curriculum = generate_curriculum(course, profile)
    current = model

    while True:
        if rec.clock >= deps.session_cap_s:
            break
        unit_id = curriculum.next_unit()
        if unit_id is None:
            break
        unit = course.unit_by_id(unit_id)
        if unit.kind is UnitKind.VIDEO:
            video = unit.payload
            rec.raw_event(video_event_wire(video.id, video.url, video.duration_s),
                          extra_s=video.duration_s)
            continue
        current = _run_exercise(current, unit.payload, variant, course, deps, rec, log, profile, rng)
        log.exercises_seen += 1
        # engagement: a frustrating run of exercises makes leaving more likely
        if rng.random() >= engagement_probability(log.success_rate, model.satisfaction_bias):
            break

    p_happy = satisfaction_probability(log.success_rate, model.satisfaction_bias)
    log.will_refer = rng.random() < p_happy
    log.returned = rng.random() < p_happy
    log.total_time_s = rec.clock
    return log


def _run_exercise(
    model: StudentModel,
    exercise: Exercise,
    variant: Variant,
    course: Course,
    deps: SimDeps,
    rec: _Recorder,
    log: SessionLog,
    profile: StudentProfile,
    rng: random.Random,
) -> StudentModel:
    mode = SessionMode.DIALOGUE
    if variant is Variant.XMOOC_ITS and rng.random() < XMOOC_MCQ_RATE:
        mode = SessionMode.MCQ_QUIZ

    step_deps = StepDeps(
        exercise=exercise, matcher=deps.matcher, profile=profile,
        choose=lambda ctx, avail, r: select_intervention(ctx, avail, deps.policy, r),
        rng=rng)
    distractors = distractor_pool(course, exercise)

    state, events = start_exercise(
        exercise, max_interventions=deps.max_interventions, mode=mode)
    pending_rewards: list[tuple[list[float] | None, InterventionKind]] = []
    consecutive_failures = 0
    actionable = events[0]
    last_options_event = events[0] if events[0].options is not None else None

    def absorb(batch: list[TutorEvent]) -> None:
        nonlocal consecutive_failures, actionable, last_options_event, model
        for event in batch:
            rec.tutor_event(event)
            if event.kind is EventKind.INTERVENTION:
                pending_rewards.append((event.context, event.intervention_kind))
                model = apply_intervention_effect(model, event.intervention_kind, exercise.skill_id)
            elif event.about is FeedbackAbout.ATTEMPT:
                reward = 1 if event.kind is EventKind.FEEDBACK_CORRECT else 0
                log.n_attempts += 1
                log.n_correct += reward
                consecutive_failures = 0 if reward else consecutive_failures + 1
                _resolve(reward)
            elif event.kind is EventKind.EXERCISE_COMPLETE:
                _resolve(0)
            if event.options is not None:
                last_options_event = event
            if event.kind in (EventKind.SHOW_PROBLEM, EventKind.ASK_RETRY,
                              EventKind.ASK_FOLLOW_UP):
                actionable = event

    def _resolve(reward: int) -> None:
        while pending_rewards:
            ctx, kind = pending_rewards.pop(0)
            log.triples.append((ctx, kind, reward))
            if ctx is not None and deps.update_policy_online:
                update_policy(deps.policy, ctx, kind, reward)

    absorb(events)
    while not state.complete:
        if state.fsm_state is FsmState.IN_MULTIPLE_CHOICE:
            # answering (or re-answering) the active multiple-choice options
            pending_event = last_options_event
            if pending_event is None:
                raise RuntimeError("simulator lost track of the active options")
        else:
            pending_event = actionable
        action = simulate_action(
            model, pending_event, rng,
            exercise=exercise,
            proficiency=model.proficiency.get(exercise.skill_id, 0.0),
            consecutive_failures=consecutive_failures,
            distractors=distractors)
        rec.student_action(action)
        state, events = step(state, action, step_deps)
        absorb(events)
    return model


# ---------------------------------------------------------------------------
# Population configs: parameter distributions, size, seed
# ---------------------------------------------------------------------------


@dataclass
class FieldDist:
    """One sampled parameter: constant, uniform, beta, or randint."""

    spec: dict

    def sample(self, rng: random.Random) -> float:
        kind = self.spec["dist"]
        if kind == "constant":
            return float(self.spec["value"])
        if kind == "uniform":
            return rng.uniform(float(self.spec["low"]), float(self.spec["high"]))
        if kind == "beta":
            value = rng.betavariate(float(self.spec["a"]), float(self.spec["b"]))
            return value * float(self.spec.get("scale", 1.0)) + float(self.spec.get("shift", 0.0))
        if kind == "randint":
            return float(rng.randint(int(self.spec["low"]), int(self.spec["high"])))
        raise ValueError(f"unknown distribution '{kind}'")


def _as_dist(value: object) -> FieldDist:
    if isinstance(value, (int, float)):
        return FieldDist({"dist": "constant", "value": value})
    if isinstance(value, dict):
        return FieldDist(value)
    raise ValueError(f"not a distribution spec: {value!r}")


@dataclass
class PopulationConfig:
    size: int
    seed: int
    fields: dict

    @classmethod
    def load(cls, path: str | Path) -> PopulationConfig:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(size=int(doc.get("size", 612)), seed=int(doc.get("seed", 0)),
                   fields=doc["fields"])

    def sample_student(self, skills: set[str], rng: random.Random, seed: int = 0) -> StudentModel:
        proficiency_dist = _as_dist(self.fields["proficiency"])
        responsiveness = {
            InterventionKind(name): _as_dist(spec).sample(rng)
            for name, spec in sorted(self.fields["responsiveness"].items())
        }
        return StudentModel(
            proficiency={sid: proficiency_dist.sample(rng) for sid in sorted(skills)},
            responsiveness=responsiveness,
            patience=int(_as_dist(self.fields["patience"]).sample(rng)),
            guess_rate=_as_dist(self.fields["guess_rate"]).sample(rng),
            reading_speed=_as_dist(self.fields["reading_speed"]).sample(rng),
            satisfaction_bias=_as_dist(self.fields["satisfaction_bias"]).sample(rng),
            rng_seed=seed,
        )
