"""A/B experiment harness: assignment, metrics, significance, full reruns.

Reruns the evaluation protocol on simulated populations: participants are
independently assigned to the full dialogue system or the degraded variant
that swaps dialogue for multiple-choice half the time, every session is
simulated end to end, and the four headline metrics are reported with
confidence intervals and two-sided significance marks. Everything is a
pure function of the config, so reports are byte-reproducible.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats

from .content import Course, load_course
from .logwalk import walk_records
from .matcher import MatcherConfig, TfidfMatcher
from .policy import PolicyModel
from .simulator import (
    DEFAULT_SESSION_CAP_S,
    PopulationConfig,
    SessionLog,
    SimDeps,
    Variant,
    simulate_session,
)

# Standard normal quantiles for the two reported confidence levels.
Z_95 = 1.959964
Z_90 = 1.644854


class NoInterventionsError(Exception):
    """The logs contain no intervention instances to compute a gain over."""


class InsufficientSamplesError(Exception):
    pass


# ---------------------------------------------------------------------------
# Metric primitives
# ---------------------------------------------------------------------------


def assign_variants(n: int, split: float, rng: random.Random) -> list[Variant]:
    """Independent Bernoulli(split) assignment to the full system."""
    if n < 2:
        raise ValueError("need at least two participants")
    if not 0.0 < split <= 1.0:
        raise ValueError("split must be in (0, 1]")
    return [Variant.FULL_ITS if rng.random() < split else Variant.XMOOC_ITS
            for _ in range(n)]


def proportion_ci(successes: int, total: int, z: float = Z_95) -> tuple[float, float]:
    """Normal-approximation proportion and halfwidth."""
    if total <= 0:
        raise InsufficientSamplesError("no observations")
    p = successes / total
    return p, z * math.sqrt(p * (1.0 - p) / total)


def compute_learning_gain(logs: list[SessionLog]) -> tuple[float, float]:
    """Share of intervention instances followed by a correct attempt.

    The instance's reward is the very next graded attempt on the same
    exercise; instances with no later attempt count as failures.
    """
    numerator = 0
    denominator = 0
    for log in logs:
        for _, _, reward in log.triples:
            denominator += 1
            numerator += reward
    if denominator == 0:
        raise NoInterventionsError("no intervention instances across the logs")
    return proportion_ci(numerator, denominator, Z_95)


def mean_ci(samples: list[float], level: float = 0.95) -> tuple[float, float]:
    """Sample mean with a normal-approximation halfwidth at the given level."""
    if len(samples) < 2:
        raise InsufficientSamplesError(f"need >= 2 samples, got {len(samples)}")
    if level == 0.95:
        z = Z_95
    elif level == 0.90:
        z = Z_90
    else:
        z = float(stats.norm.ppf(0.5 + level / 2.0))
    n = len(samples)
    mean = sum(samples) / n
    variance = sum((x - mean) ** 2 for x in samples) / (n - 1)
    return mean, z * math.sqrt(variance) / math.sqrt(n)


@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    p_value: float
    mark: str  # "**" below 0.05, "*" below 0.10, "" otherwise

    @staticmethod
    def from_p(statistic: float, p_value: float) -> "SignificanceResult":
        mark = "**" if p_value < 0.05 else "*" if p_value < 0.10 else ""
        return SignificanceResult(statistic, p_value, mark)


def welch_t_test(a: list[float], b: list[float]) -> SignificanceResult:
    """Two-sided Welch test for a difference in means."""
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSamplesError("both groups need >= 2 samples")
    t, p = stats.ttest_ind(a, b, equal_var=False)
    return SignificanceResult.from_p(float(t), float(p))


def two_proportion_z_test(x1: int, n1: int, x2: int, n2: int) -> SignificanceResult:
    """Two-sided pooled-variance z test for a difference in proportions."""
    if n1 <= 0 or n2 <= 0:
        raise InsufficientSamplesError("both groups need observations")
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        return SignificanceResult.from_p(0.0, 1.0)
    z = (p1 - p2) / se
    p_value = math.erfc(abs(z) / math.sqrt(2.0))
    return SignificanceResult.from_p(z, p_value)


# ---------------------------------------------------------------------------
# Experiment configuration and report
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    population: PopulationConfig
    course: Course
    n_participants: int = 612
    assignment_split: float = 0.8
    seed: int = 0
    session_cap_s: float = DEFAULT_SESSION_CAP_S
    update_policy_online: bool = True
    matcher_config: MatcherConfig | None = None


@dataclass
class VariantSummary:
    name: str
    participants: int
    time_spent_min: float
    time_spent_halfwidth: float
    returning_pct: float
    returning_halfwidth: float
    will_refer_pct: float
    will_refer_halfwidth: float
    learning_gain_pct: float
    learning_gain_halfwidth: float
    gain_numerator: int
    gain_denominator: int


@dataclass
class ExperimentReport:
    seed: int
    n_participants: int
    assignment_split: float
    variants: dict[str, VariantSummary]
    pooled_learning_gain_pct: float
    pooled_learning_gain_halfwidth: float
    significance: dict[str, dict]
    crosscheck: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def row(v: VariantSummary) -> dict:
            return {
                "participants": v.participants,
                "time_spent_min": {"mean": v.time_spent_min, "halfwidth": v.time_spent_halfwidth},
                "returning_pct": {"mean": v.returning_pct, "halfwidth": v.returning_halfwidth},
                "will_refer_pct": {"mean": v.will_refer_pct, "halfwidth": v.will_refer_halfwidth},
                "learning_gain_pct": {
                    "mean": v.learning_gain_pct, "halfwidth": v.learning_gain_halfwidth,
                    "numerator": v.gain_numerator, "denominator": v.gain_denominator,
                },
            }
        return {
            "config": {
                "seed": self.seed,
                "n_participants": self.n_participants,
                "assignment_split": self.assignment_split,
            },
            "rows": {name: row(v) for name, v in sorted(self.variants.items())},
            "pooled_learning_gain_pct": {
                "mean": self.pooled_learning_gain_pct,
                "halfwidth": self.pooled_learning_gain_halfwidth,
            },
            "significance": self.significance,
            "crosscheck": self.crosscheck,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _summarize(name: str, logs: list[SessionLog]) -> VariantSummary:
    if not logs:  # degenerate assignment (tiny n): an empty arm reports zeros
        return VariantSummary(name, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0)
    times_min = [log.total_time_s / 60.0 for log in logs]
    if len(times_min) >= 2:
        t_mean, t_half = mean_ci(times_min, 0.95)
    else:
        t_mean, t_half = times_min[0], 0.0
    ret_p, ret_half = proportion_ci(sum(log.returned for log in logs), len(logs))
    ref_p, ref_half = proportion_ci(sum(log.will_refer for log in logs), len(logs))
    gain_num = sum(r for log in logs for _, _, r in log.triples)
    gain_den = sum(len(log.triples) for log in logs)
    if gain_den:
        gain_p, gain_half = proportion_ci(gain_num, gain_den)
    else:
        gain_p, gain_half = 0.0, 0.0
    return VariantSummary(
        name=name, participants=len(logs),
        time_spent_min=t_mean, time_spent_halfwidth=t_half,
        returning_pct=100.0 * ret_p, returning_halfwidth=100.0 * ret_half,
        will_refer_pct=100.0 * ref_p, will_refer_halfwidth=100.0 * ref_half,
        learning_gain_pct=100.0 * gain_p, learning_gain_halfwidth=100.0 * gain_half,
        gain_numerator=gain_num, gain_denominator=gain_den,
    )


def compare_variants(
    full_logs: list[SessionLog], xmooc_logs: list[SessionLog]
) -> dict[str, dict]:
    """Per-metric two-sided tests between the two arms.

    Needs at least two participants per arm; smaller arms get neutral
    (unmarked) results instead of an error.
    """
    out: dict[str, dict] = {}

    def put(name: str, result: SignificanceResult) -> None:
        out[name] = {"statistic": result.statistic, "p_value": result.p_value,
                     "mark": result.mark}

    if len(full_logs) < 2 or len(xmooc_logs) < 2:
        neutral = SignificanceResult(0.0, 1.0, "")
        for name in ("time_spent", "returning", "will_refer", "learning_gain"):
            put(name, neutral)
        return out

    full_times = [log.total_time_s / 60.0 for log in full_logs]
    xmooc_times = [log.total_time_s / 60.0 for log in xmooc_logs]
    put("time_spent", welch_t_test(full_times, xmooc_times))
    put("returning", two_proportion_z_test(
        sum(log.returned for log in full_logs), len(full_logs),
        sum(log.returned for log in xmooc_logs), len(xmooc_logs)))
    put("will_refer", two_proportion_z_test(
        sum(log.will_refer for log in full_logs), len(full_logs),
        sum(log.will_refer for log in xmooc_logs), len(xmooc_logs)))
    put("learning_gain", two_proportion_z_test(
        sum(r for log in full_logs for _, _, r in log.triples),
        max(1, sum(len(log.triples) for log in full_logs)),
        sum(r for log in xmooc_logs for _, _, r in log.triples),
        max(1, sum(len(log.triples) for log in xmooc_logs))))
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Assign, simulate every session, aggregate, and test significance.

    Sessions run sequentially in participant order against one shared
    policy model, so a fixed seed reproduces the report byte for byte.
    The learning-gain counts are cross-checked against the standalone
    log walker on every run.
    """
    matcher = TfidfMatcher(config.course, config.matcher_config)
    policy = PolicyModel()
    deps = SimDeps(matcher=matcher, policy=policy,
                   update_policy_online=config.update_policy_online,
                   session_cap_s=config.session_cap_s)

    assignment = assign_variants(
        config.n_participants, config.assignment_split,
        random.Random(f"{config.seed}:assign"))

    logs: list[SessionLog] = []
    skills = config.course.skill_ids()
    for i, variant in enumerate(assignment):
        sample_rng = random.Random(f"{config.seed}:pop:{i}")
        behavior_rng = random.Random(f"{config.seed}:beh:{i}")
        model = config.population.sample_student(skills, sample_rng, seed=i)
        logs.append(simulate_session(
            model, variant, config.course, deps, rng=behavior_rng,
            student_id=f"s{i:04d}", session_id=f"sess{i:04d}"))

    full = [log for log in logs if log.variant is Variant.FULL_ITS]
    xmooc = [log for log in logs if log.variant is Variant.XMOOC_ITS]
    pooled_p, pooled_half = compute_learning_gain(logs)

    # independent recount straight from the serialized records
    walked = walk_records(r for log in logs for r in log.records)
    own_num = sum(r for log in logs for _, _, r in log.triples)
    own_den = sum(len(log.triples) for log in logs)
    if (walked.numerator, walked.denominator) != (own_num, own_den):
        raise AssertionError(
            f"learning-gain cross-check failed: walker {walked.numerator}/{walked.denominator} "
            f"vs recorded {own_num}/{own_den}")

    return ExperimentReport(
        seed=config.seed,
        n_participants=config.n_participants,
        assignment_split=config.assignment_split,
        variants={
            Variant.FULL_ITS.value: _summarize(Variant.FULL_ITS.value, full),
            Variant.XMOOC_ITS.value: _summarize(Variant.XMOOC_ITS.value, xmooc),
        },
        pooled_learning_gain_pct=100.0 * pooled_p,
        pooled_learning_gain_halfwidth=100.0 * pooled_half,
        significance=compare_variants(full, xmooc),
        crosscheck={"walker_numerator": walked.numerator,
                    "walker_denominator": walked.denominator,
                    "recorded_numerator": own_num,
                    "recorded_denominator": own_den},
    )


def load_experiment_config(
    course_dir: str | Path,
    population_path: str | Path,
    *,
    n_participants: int | None = None,
    assignment_split: float = 0.8,
    seed: int = 0,
    session_cap_s: float = DEFAULT_SESSION_CAP_S,
) -> ExperimentConfig:
    course = load_course(course_dir)
    population = PopulationConfig.load(population_path)
    return ExperimentConfig(
        population=population,
        course=course,
        n_participants=n_participants if n_participants is not None else population.size,
        assignment_split=assignment_split,
        seed=seed,
        session_cap_s=session_cap_s,
    )
