"""Online policy choosing which intervention kind to give next.

One arm per intervention kind. Each arm keeps Beta success counts (cold
start) and a logistic value estimate over the session context (context
sensitivity); selection scores blend the two 50/50. Rewards are binary:
1 iff the next attempt on the same exercise is correct. Updates are pure
arithmetic, so replaying the same (context, kind, reward) stream rebuilds
a bit-identical model.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .content import KIND_ORDER, Exercise, InterventionKind

if TYPE_CHECKING:
    from .curriculum import StudentProfile
    from .fsm import SessionState
    from .matcher import MatchResult

# Context layout (fixed order, part of the wire format):
#   0 background_level          questionnaire answer for the exercise skill
#   1 skill_proficiency         profile estimate for the exercise skill
#   2 attempt_number            classified attempts so far / max attempts
#   3 last_match_score          0.0 when triggered by a help request
#   4..9 kind_counts            interventions already given, enum order
#   10 difficulty_prior         authored signal reserved; constant for now
CONTEXT_DIM = 11

LEARNING_RATE = 0.05
DEFAULT_EPSILON = 0.1
DEFAULT_DIFFICULTY_PRIOR = 0.5

_BACKGROUND_LEVEL = {"none": 0.0, "some": 0.5, "strong": 1.0}
DEFAULT_PROFICIENCY = 0.2


class NoAvailableInterventionError(Exception):
    """Selection was called with an empty set of candidate kinds."""


def featurize(
    profile: StudentProfile,
    state: SessionState,
    last: MatchResult | None,
) -> list[float]:
    """Build the context vector for one selection decision."""
    skill = state.skill_id
    answer = profile.background_answers.get(skill)
    background = _BACKGROUND_LEVEL[answer.value] if answer is not None else 0.0
    proficiency = profile.proficiency.get(skill, DEFAULT_PROFICIENCY)
    max_attempts = state.max_interventions + 1
    counts = [0.0] * len(KIND_ORDER)
    for kind, _ in state.interventions_given:
        counts[KIND_ORDER.index(kind)] += 1.0
    return [
        background,
        proficiency,
        len(state.attempts) / max_attempts,
        last.score if last is not None else 0.0,
        *counts,
        DEFAULT_DIFFICULTY_PRIOR,
    ]


def _sigmoid(x: float) -> float:
    if x < -60.0:
        return 0.0
    if x > 60.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(-x))


@dataclass
class ArmState:
    """Value estimators for one intervention kind."""

    alpha: float = 1.0
    beta: float = 1.0
    weights: list[float] = field(default_factory=lambda: [0.0] * CONTEXT_DIM)
    bias: float = 0.0

    def logistic_estimate(self, ctx: list[float]) -> float:
        z = self.bias + sum(w * x for w, x in zip(self.weights, ctx))
        return _sigmoid(z)

    def blended_estimate(self, ctx: list[float]) -> float:
        return 0.5 * (self.alpha / (self.alpha + self.beta)) + 0.5 * self.logistic_estimate(ctx)


@dataclass
class Exploration:
    mode: str = "epsilon_greedy"  # or "thompson"
    epsilon: float = DEFAULT_EPSILON


@dataclass
class PolicyModel:
    exploration: Exploration = field(default_factory=Exploration)
    arms: dict[InterventionKind, ArmState] = field(
        default_factory=lambda: {kind: ArmState() for kind in KIND_ORDER})
    update_count: int = 0


def select_intervention(
    ctx: list[float],
    available: set[InterventionKind],
    model: PolicyModel,
    rng: random.Random,
) -> InterventionKind:
    """Pick one kind from ``available``.

    Epsilon-greedy exploits the blended estimate with probability 1 - eps,
    otherwise draws uniformly. Thompson replaces the Beta mean with a Beta
    sample. Ties break by enum declaration order, so fixed inputs give a
    fixed answer.
    """
    if not available:
        raise NoAvailableInterventionError("no intervention kinds available")
    candidates = [kind for kind in KIND_ORDER if kind in available]

    if model.exploration.mode == "epsilon_greedy":
        if rng.random() < model.exploration.epsilon:
            return candidates[rng.randrange(len(candidates))]
        # max keeps the first of equals, i.e. enum-order tie-break
        return max(candidates, key=lambda k: model.arms[k].blended_estimate(ctx))

    if model.exploration.mode == "thompson":
        best, best_score = candidates[0], -1.0
        for kind in candidates:  # enum order keeps the draw sequence stable
            arm = model.arms[kind]
            score = 0.5 * rng.betavariate(arm.alpha, arm.beta) + 0.5 * arm.logistic_estimate(ctx)
            if score > best_score:
                best, best_score = kind, score
        return best

    raise ValueError(f"unknown exploration mode '{model.exploration.mode}'")


def update_policy(
    model: PolicyModel,
    ctx: list[float],
    chosen: InterventionKind,
    reward: int,
) -> PolicyModel:
    """Fold one observed reward into the chosen arm; other arms untouched.

    Beta counts take the raw outcome; the logistic takes one SGD step on
    log-loss. Updates to different kinds commute bit-for-bit.
    """
    if reward not in (0, 1):
        raise ValueError(f"reward must be 0 or 1, got {reward!r}")
    if len(ctx) != CONTEXT_DIM:
        raise ValueError(f"context has dimension {len(ctx)}, expected {CONTEXT_DIM}")
    arm = model.arms[chosen]
    arm.alpha += reward
    arm.beta += 1 - reward
    gradient = arm.logistic_estimate(ctx) - reward
    for i, x in enumerate(ctx):
        arm.weights[i] -= LEARNING_RATE * gradient * x
    arm.bias -= LEARNING_RATE * gradient
    model.update_count += 1
    return model


# ---------------------------------------------------------------------------
# Snapshots: versioned JSON, floats as decimal strings (repr round-trips
# exactly, and keeps the file byte-stable across platforms)
# ---------------------------------------------------------------------------

SNAPSHOT_VERSION = 1


def policy_to_dict(model: PolicyModel) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "exploration": {
            "mode": model.exploration.mode,
            "epsilon": repr(model.exploration.epsilon),
        },
        "update_count": model.update_count,
        "arms": {
            kind.value: {
                "alpha": repr(arm.alpha),
                "beta": repr(arm.beta),
                "weights": [repr(w) for w in arm.weights],
                "bias": repr(arm.bias),
            }
            for kind, arm in sorted(model.arms.items(), key=lambda kv: kv[0].value)
        },
    }


def policy_from_dict(doc: dict) -> PolicyModel:
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported policy snapshot version {doc.get('version')!r}")
    arms = {}
    for kind_name, arm_doc in doc["arms"].items():
        arms[InterventionKind(kind_name)] = ArmState(
            alpha=float(arm_doc["alpha"]),
            beta=float(arm_doc["beta"]),
            weights=[float(w) for w in arm_doc["weights"]],
            bias=float(arm_doc["bias"]),
        )
    for kind in KIND_ORDER:
        arms.setdefault(kind, ArmState())
    return PolicyModel(
        exploration=Exploration(
            mode=doc["exploration"]["mode"],
            epsilon=float(doc["exploration"]["epsilon"]),
        ),
        arms=arms,
        update_count=int(doc["update_count"]),
    )


def save_policy(model: PolicyModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(policy_to_dict(model), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_policy(path: str | Path) -> PolicyModel:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def available_kinds(exercise: Exercise, given: list[tuple[InterventionKind, int]]) -> set[InterventionKind]:
    """Kinds that still have at least one unused payload."""
    used: dict[InterventionKind, set[int]] = {}
    for kind, idx in given:
        used.setdefault(kind, set()).add(idx)
    out = set()
    for kind, payloads in exercise.interventions.items():
        if len(used.get(kind, ())) < len(payloads):
            out.add(kind)
    return out


def next_unused_index(
    exercise: Exercise, kind: InterventionKind, given: list[tuple[InterventionKind, int]]
) -> int:
    used = {idx for k, idx in given if k is kind}
    for i in range(len(exercise.interventions[kind])):
        if i not in used:
            return i
    raise NoAvailableInterventionError(f"all {kind.value} payloads already used")
