"""Inner loop: one exercise as a finite-state dialogue.

Flow: present the problem, await the student, classify attempts, intervene
on failure, then retry or follow up until the exercise completes. Each
intervention kind has its own state; only the multiple-choice state waits
for input (an option click), the others resolve within the step that
delivers them. A session is an owned value: one exercise, single-threaded.

Quiz mode (``McqQuiz``) renders the whole exercise as its multiple-choice
form: selections are the attempts, and a wrong first selection reveals the
answer, which counts as the one multiple-choice intervention.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .content import Exercise, FollowUp, InterventionKind, InterventionPayload
from .curriculum import StudentProfile
from .matcher import (
    EmptyAttemptError,
    IndexOutOfRangeError,
    Matcher,
    MatchResult,
    classify_mcq,
    correct_option_index,
)
from .policy import available_kinds, featurize, next_unused_index

# Follow-up questions are short; grade them more leniently than attempts.
FOLLOWUP_THRESHOLD_SLACK = 0.15
DEFAULT_MAX_INTERVENTIONS = 3


class FsmState(str, Enum):
    PRESENT_PROBLEM = "present_problem"
    AWAIT_ACTION = "await_action"
    IN_TEXT_HINT = "in_text_hint"
    IN_MATH_HINT = "in_math_hint"
    IN_ELABORATION = "in_elaboration"
    IN_EXPLANATION = "in_explanation"
    IN_CONCEPT_TREE = "in_concept_tree"
    IN_MULTIPLE_CHOICE = "in_multiple_choice"
    AWAIT_FOLLOW_UP = "await_follow_up"
    COMPLETE = "complete"


_KIND_STATE = {
    InterventionKind.TEXT_HINT: FsmState.IN_TEXT_HINT,
    InterventionKind.MATH_HINT: FsmState.IN_MATH_HINT,
    InterventionKind.ELABORATION: FsmState.IN_ELABORATION,
    InterventionKind.EXPLANATION: FsmState.IN_EXPLANATION,
    InterventionKind.CONCEPT_TREE: FsmState.IN_CONCEPT_TREE,
    InterventionKind.MULTIPLE_CHOICE: FsmState.IN_MULTIPLE_CHOICE,
}


def intervention_state(kind: InterventionKind) -> FsmState:
    return _KIND_STATE[kind]


class Outcome(str, Enum):
    SOLVED = "solved"
    SKIPPED = "skipped"
    EXHAUSTED = "exhausted"


class SessionMode(str, Enum):
    DIALOGUE = "dialogue"
    MCQ_QUIZ = "mcq_quiz"


class ActionKind(str, Enum):
    ATTEMPT = "attempt"
    ASK_HELP = "ask_help"
    SKIP = "skip"
    SELECT_OPTION = "select_option"
    FOLLOW_UP_REPLY = "follow_up_reply"


@dataclass(frozen=True)
class StudentAction:
    kind: ActionKind
    text: str | None = None
    option_index: int | None = None

    @staticmethod
    def attempt(text: str) -> StudentAction:
        return StudentAction(ActionKind.ATTEMPT, text=text)

    @staticmethod
    def ask_help() -> StudentAction:
        return StudentAction(ActionKind.ASK_HELP)

    @staticmethod
    def skip() -> StudentAction:
        return StudentAction(ActionKind.SKIP)

    @staticmethod
    def select_option(index: int) -> StudentAction:
        return StudentAction(ActionKind.SELECT_OPTION, option_index=index)

    @staticmethod
    def follow_up_reply(text: str) -> StudentAction:
        return StudentAction(ActionKind.FOLLOW_UP_REPLY, text=text)


class EventKind(str, Enum):
    SHOW_PROBLEM = "show_problem"
    FEEDBACK_CORRECT = "feedback_correct"
    FEEDBACK_INCORRECT = "feedback_incorrect"
    INTERVENTION = "intervention"
    ASK_RETRY = "ask_retry"
    ASK_FOLLOW_UP = "ask_follow_up"
    EXERCISE_COMPLETE = "exercise_complete"


class FeedbackAbout(str, Enum):
    ATTEMPT = "attempt"
    MCQ_OPTION = "mcq_option"
    FOLLOW_UP = "follow_up"


@dataclass
class TutorEvent:
    """One tutor move; fields beyond ``kind`` apply per kind."""

    kind: EventKind
    exercise_id: str
    text: str | None = None
    about: FeedbackAbout | None = None
    intervention_kind: InterventionKind | None = None
    payload_index: int | None = None
    options: tuple[str, ...] | None = None
    context: list[float] | None = None
    outcome: Outcome | None = None
    timestamp: float | None = None  # stamped by the hosting layer


@dataclass
class SessionState:
    exercise_id: str
    skill_id: str
    mode: SessionMode = SessionMode.DIALOGUE
    fsm_state: FsmState = FsmState.PRESENT_PROBLEM
    attempts: list[tuple[str, MatchResult]] = field(default_factory=list)
    interventions_given: list[tuple[InterventionKind, int]] = field(default_factory=list)
    outcome: Outcome | None = None
    attempts_remaining: int = 0
    max_interventions: int = DEFAULT_MAX_INTERVENTIONS
    pending: tuple[InterventionKind, int] | None = None  # awaiting MCQ click or follow-up reply

    @property
    def complete(self) -> bool:
        return self.fsm_state is FsmState.COMPLETE

    def last_result(self) -> MatchResult | None:
        return self.attempts[-1][1] if self.attempts else None


class IllegalActionError(Exception):
    """Action is not legal in the current state; the state is unchanged."""

    def __init__(self, state: FsmState, action: StudentAction, detail: str = ""):
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"action '{action.kind.value}' is illegal in state '{state.value}'{suffix}")
        self.state = state
        self.action = action


ChooseFn = Callable[[list[float], set[InterventionKind], random.Random], InterventionKind]


@dataclass
class StepDeps:
    """Everything a step may need besides the session state itself."""

    exercise: Exercise
    matcher: Matcher
    profile: StudentProfile
    choose: ChooseFn
    rng: random.Random


def legal_actions(state: SessionState) -> list[ActionKind]:
    """Action kinds the student may take; empty in terminal/transient states."""
    table = {
        FsmState.AWAIT_ACTION: [ActionKind.ATTEMPT, ActionKind.ASK_HELP, ActionKind.SKIP],
        FsmState.IN_MULTIPLE_CHOICE: [ActionKind.SELECT_OPTION],
        FsmState.AWAIT_FOLLOW_UP: [ActionKind.FOLLOW_UP_REPLY, ActionKind.SKIP],
    }
    return table.get(state.fsm_state, [])


def start_exercise(
    exercise: Exercise,
    *,
    max_interventions: int = DEFAULT_MAX_INTERVENTIONS,
    mode: SessionMode = SessionMode.DIALOGUE,
) -> tuple[SessionState, list[TutorEvent]]:
    """Open an exercise; allows one attempt more than the intervention cap."""
    if max_interventions < 1:
        raise ValueError("max_interventions must be >= 1")
    mcq_payloads = exercise.interventions.get(InterventionKind.MULTIPLE_CHOICE, ())
    if mode is SessionMode.MCQ_QUIZ and not mcq_payloads:
        mode = SessionMode.DIALOGUE  # cannot force the quiz form without one

    state = SessionState(
        exercise_id=exercise.id,
        skill_id=exercise.skill_id,
        mode=mode,
        attempts_remaining=max_interventions + 1,
        max_interventions=max_interventions,
    )
    if mode is SessionMode.MCQ_QUIZ:
        payload = mcq_payloads[0]
        state.fsm_state = FsmState.IN_MULTIPLE_CHOICE
        state.pending = (InterventionKind.MULTIPLE_CHOICE, 0)
        events = [TutorEvent(
            EventKind.SHOW_PROBLEM, exercise.id,
            text=payload.body,
            options=tuple(o.text for o in payload.options),
        )]
    else:
        state.fsm_state = FsmState.AWAIT_ACTION
        events = [TutorEvent(EventKind.SHOW_PROBLEM, exercise.id, text=exercise.problem_statement)]
    return state, events


def step(
    state: SessionState,
    action: StudentAction,
    deps: StepDeps,
) -> tuple[SessionState, list[TutorEvent]]:
    """Advance the dialogue by one student action.

    Total over legal (state, action) pairs; raises IllegalActionError and
    leaves the state untouched otherwise. Every step emits at least one
    event.
    """
    if action.kind not in legal_actions(state):
        raise IllegalActionError(state.fsm_state, action)

    if state.fsm_state is FsmState.AWAIT_ACTION:
        if action.kind is ActionKind.ATTEMPT:
            return _handle_attempt(state, action.text or "", deps)
        if action.kind is ActionKind.ASK_HELP:
            events: list[TutorEvent] = []
            _intervene_or_exhaust(state, deps, events)
            return state, events
        return _complete(state, Outcome.SKIPPED, [])

    if state.fsm_state is FsmState.IN_MULTIPLE_CHOICE:
        return _handle_selection(state, action, deps)

    # await_follow_up
    if action.kind is ActionKind.SKIP:
        return _complete(state, Outcome.SKIPPED, [])
    return _handle_follow_up_reply(state, action.text or "", deps)


# ---------------------------------------------------------------------------
# Transition pieces
# ---------------------------------------------------------------------------


def _complete(
    state: SessionState, outcome: Outcome, events: list[TutorEvent]
) -> tuple[SessionState, list[TutorEvent]]:
    state.fsm_state = FsmState.COMPLETE
    state.outcome = outcome
    state.pending = None
    events.append(TutorEvent(EventKind.EXERCISE_COMPLETE, state.exercise_id, outcome=outcome))
    return state, events


def _handle_attempt(
    state: SessionState, text: str, deps: StepDeps
) -> tuple[SessionState, list[TutorEvent]]:
    try:
        result = deps.matcher.score_attempt(text, deps.exercise)
    except EmptyAttemptError:
        # a blank attempt is a prompt to re-ask, not a failure
        return state, [TutorEvent(
            EventKind.SHOW_PROBLEM, state.exercise_id, text=deps.exercise.problem_statement)]

    state.attempts.append((text, result))
    state.attempts_remaining -= 1
    if result.correct:
        events = [TutorEvent(
            EventKind.FEEDBACK_CORRECT, state.exercise_id,
            text="That's right, well done.", about=FeedbackAbout.ATTEMPT)]
        return _complete(state, Outcome.SOLVED, events)

    detail = ""
    if result.keyword_misses:
        detail = " Your answer is missing: " + ", ".join(result.keyword_misses) + "."
    events = [TutorEvent(
        EventKind.FEEDBACK_INCORRECT, state.exercise_id,
        text="Not quite." + detail, about=FeedbackAbout.ATTEMPT)]
    _intervene_or_exhaust(state, deps, events)
    return state, events


def _intervene_or_exhaust(
    state: SessionState, deps: StepDeps, events: list[TutorEvent]
) -> None:
    """After a failure or help request: deliver an intervention or give up."""
    available = available_kinds(deps.exercise, state.interventions_given)
    if available and len(state.interventions_given) < state.max_interventions:
        ctx = featurize(deps.profile, state, state.last_result())
        kind = deps.choose(ctx, available, deps.rng)
        idx = next_unused_index(deps.exercise, kind, state.interventions_given)
        payload = deps.exercise.interventions[kind][idx]
        state.interventions_given.append((kind, idx))
        events.append(TutorEvent(
            EventKind.INTERVENTION, state.exercise_id,
            text=payload.body,
            intervention_kind=kind, payload_index=idx,
            options=tuple(o.text for o in payload.options) if payload.options else None,
            context=ctx,
        ))
        if kind is InterventionKind.MULTIPLE_CHOICE:
            state.fsm_state = FsmState.IN_MULTIPLE_CHOICE
            state.pending = (kind, idx)
        elif payload.followup is FollowUp.RETRY:
            events.append(TutorEvent(
                EventKind.ASK_RETRY, state.exercise_id, text="Give the exercise another try."))
            state.fsm_state = FsmState.AWAIT_ACTION
        else:
            events.append(TutorEvent(
                EventKind.ASK_FOLLOW_UP, state.exercise_id, text=payload.followup_text))
            state.fsm_state = FsmState.AWAIT_FOLLOW_UP
            state.pending = (kind, idx)
        return

    # Nothing left to offer: reveal an explanation if one remains, then stop.
    reveal = _unused_explanation(state, deps.exercise)
    if reveal is not None:
        idx, payload = reveal
        state.interventions_given.append((InterventionKind.EXPLANATION, idx))
        events.append(TutorEvent(
            EventKind.INTERVENTION, state.exercise_id,
            text=payload.body,
            intervention_kind=InterventionKind.EXPLANATION, payload_index=idx,
        ))
    _complete(state, Outcome.EXHAUSTED, events)


def _unused_explanation(
    state: SessionState, exercise: Exercise
) -> tuple[int, InterventionPayload] | None:
    payloads = exercise.interventions.get(InterventionKind.EXPLANATION, ())
    used = {idx for kind, idx in state.interventions_given
            if kind is InterventionKind.EXPLANATION}
    for i, payload in enumerate(payloads):
        if i not in used:
            return i, payload
    return None


def _handle_selection(
    state: SessionState, action: StudentAction, deps: StepDeps
) -> tuple[SessionState, list[TutorEvent]]:
    kind, idx = state.pending  # type: ignore[misc]  # pending is set in this state
    payload = deps.exercise.interventions[kind][idx]
    try:
        result = classify_mcq(action.option_index or 0, payload)
    except IndexOutOfRangeError as exc:
        raise IllegalActionError(state.fsm_state, action, str(exc)) from exc

    if state.mode is SessionMode.MCQ_QUIZ:
        return _handle_quiz_selection(state, result, payload, idx, action.option_index or 0)

    # Dialogue mode: the click answers the intervention, not the exercise.
    state.pending = None
    state.fsm_state = FsmState.AWAIT_ACTION
    if result.correct:
        events = [TutorEvent(
            EventKind.FEEDBACK_CORRECT, state.exercise_id,
            text="Correct choice.", about=FeedbackAbout.MCQ_OPTION)]
    else:
        correct = payload.options[correct_option_index(payload)].text
        events = [TutorEvent(
            EventKind.FEEDBACK_INCORRECT, state.exercise_id,
            text=f"Not that one. The correct answer is: {correct}",
            about=FeedbackAbout.MCQ_OPTION)]
    events.append(TutorEvent(
        EventKind.ASK_RETRY, state.exercise_id, text="Now try the exercise again."))
    return state, events


def _handle_quiz_selection(
    state: SessionState,
    result: MatchResult,
    payload: InterventionPayload,
    idx: int,
    option_index: int,
) -> tuple[SessionState, list[TutorEvent]]:
    """Quiz mode: the selection is the attempt itself."""
    option_text = payload.options[option_index].text
    state.attempts.append((option_text, result))
    state.attempts_remaining -= 1

    if result.correct:
        events = [TutorEvent(
            EventKind.FEEDBACK_CORRECT, state.exercise_id,
            text="That's right, well done.", about=FeedbackAbout.ATTEMPT)]
        return _complete(state, Outcome.SOLVED, events)

    events = [TutorEvent(
        EventKind.FEEDBACK_INCORRECT, state.exercise_id,
        text="Not quite.", about=FeedbackAbout.ATTEMPT)]
    pair = (InterventionKind.MULTIPLE_CHOICE, idx)
    if pair not in state.interventions_given:
        # first miss reveals the answer; that reveal is the quiz's intervention
        correct = payload.options[correct_option_index(payload)].text
        state.interventions_given.append(pair)
        events.append(TutorEvent(
            EventKind.INTERVENTION, state.exercise_id,
            text=f"The correct answer is: {correct}",
            intervention_kind=InterventionKind.MULTIPLE_CHOICE, payload_index=idx,
        ))
    if state.attempts_remaining > 0:
        events.append(TutorEvent(
            EventKind.ASK_RETRY, state.exercise_id, text="Pick the right option."))
        return state, events
    return _complete(state, Outcome.EXHAUSTED, events)


def _handle_follow_up_reply(
    state: SessionState, text: str, deps: StepDeps
) -> tuple[SessionState, list[TutorEvent]]:
    kind, idx = state.pending  # type: ignore[misc]
    payload = deps.exercise.interventions[kind][idx]
    events: list[TutorEvent] = []

    if payload.followup is FollowUp.QUESTION:
        try:
            graded = deps.matcher.score_against_text(
                text, payload.followup_text or "",
                threshold=max(0.0, deps.matcher.config.threshold - FOLLOWUP_THRESHOLD_SLACK),
            )
        except EmptyAttemptError:
            return state, [TutorEvent(
                EventKind.ASK_FOLLOW_UP, state.exercise_id, text=payload.followup_text)]
        if graded.correct:
            events.append(TutorEvent(
                EventKind.FEEDBACK_CORRECT, state.exercise_id,
                text="Good, that's the idea.", about=FeedbackAbout.FOLLOW_UP))
        else:
            events.append(TutorEvent(
                EventKind.FEEDBACK_INCORRECT, state.exercise_id,
                text="Not exactly, but let's move on.", about=FeedbackAbout.FOLLOW_UP))
        retry_text = "Now try the exercise again."
    else:
        # confirmations and prompts are acknowledged, not graded
        retry_text = "Thanks. Now try the exercise again."

    state.pending = None
    state.fsm_state = FsmState.AWAIT_ACTION
    events.append(TutorEvent(EventKind.ASK_RETRY, state.exercise_id, text=retry_text))
    return state, events
