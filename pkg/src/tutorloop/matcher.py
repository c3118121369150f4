"""Lexical solution matching: is a free-text attempt correct?

Attempts are compared against an exercise's expectations with tf-idf cosine
similarity over a bag of words; idf comes from the whole course's expectation
corpus with add-one smoothing so unseen tokens keep finite weight. A
required-keyword gate lets authors force specific terms. The ``Matcher``
protocol keeps the model pluggable; this baseline is deterministic and
dependency-free.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, runtime_checkable

from .content import Course, Exercise, InterventionKind, InterventionPayload

_WORD_RE = re.compile(r"[a-z0-9]+")

# Deliberately small: only glue words that carry no grading signal.
DEFAULT_STOPWORDS = frozenset("""
a an and are as at be been by can could do does for from has have if in into
is it its of on or that the their then there these this those to was we were
what when which will with would you your
""".split())


class MatchLabel(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


class EmptyAttemptError(Exception):
    """Attempt normalized to zero tokens; the caller should re-ask."""


class IndexOutOfRangeError(Exception):
    """Selected option index does not exist in the payload."""


@dataclass(frozen=True)
class MatchResult:
    label: MatchLabel
    score: float
    best_expectation_id: str
    keyword_misses: tuple[str, ...] = ()

    @property
    def correct(self) -> bool:
        return self.label is MatchLabel.CORRECT


@dataclass(frozen=True)
class MatcherConfig:
    threshold: float = 0.65
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    idf_smoothing: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")


def load_matcher_config(bundle_dir: str | Path) -> MatcherConfig:
    """Read ``matcher.json`` next to a course bundle; defaults if absent.

    ``stopwords_file`` is a plain-text list, one token per line.
    """
    bundle = Path(bundle_dir)
    path = bundle / "matcher.json"
    if not path.exists():
        return MatcherConfig()
    doc = json.loads(path.read_text(encoding="utf-8"))
    stopwords = DEFAULT_STOPWORDS
    if "stopwords_file" in doc:
        lines = (bundle / doc["stopwords_file"]).read_text(encoding="utf-8").splitlines()
        stopwords = frozenset(tok.strip().lower() for tok in lines if tok.strip())
    return MatcherConfig(
        threshold=float(doc.get("threshold", 0.65)),
        stopwords=stopwords,
        idf_smoothing=float(doc.get("idf_smoothing", 1.0)),
    )


def normalize(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercase, split on whitespace/punctuation, drop stopwords.

    Duplicates are preserved (bag-of-words counts matter); empty input
    yields an empty list.
    """
    return [tok for tok in _WORD_RE.findall(text.lower()) if tok not in stopwords]


@runtime_checkable
class Matcher(Protocol):
    """Anything that can grade attempts can stand in for the baseline."""

    config: MatcherConfig

    def score_attempt(self, attempt: str, exercise: Exercise) -> MatchResult: ...

    def score_against_text(
        self, attempt: str, reference: str, threshold: float | None = None
    ) -> MatchResult: ...


class TfidfMatcher:
    """Baseline matcher; idf fitted once over the course's expectations."""

    def __init__(self, course: Course, config: MatcherConfig | None = None):
        self.config = config or MatcherConfig()
        docs = [
            normalize(exp.text, self.config.stopwords)
            for ex in course.exercises()
            for exp in ex.expectations
        ]
        self._n_docs = len(docs)
        df: dict[str, int] = {}
        for tokens in docs:
            for tok in set(tokens):
                df[tok] = df.get(tok, 0) + 1
        self._df = df
        self._vector_cache: dict[tuple[str, str], tuple[dict[str, float], float]] = {}

    def _idf(self, token: str) -> float:
        s = self.config.idf_smoothing
        return 1.0 + math.log((self._n_docs + s) / (self._df.get(token, 0) + s))

    def _vector(self, tokens: list[str]) -> tuple[dict[str, float], float]:
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        weights = {tok: count * self._idf(tok) for tok, count in counts.items()}
        norm = math.sqrt(sum(w * w for w in weights.values()))
        return weights, norm

    def _expectation_vector(self, exp_id: str, text: str) -> tuple[dict[str, float], float]:
        key = (exp_id, text)
        if key not in self._vector_cache:
            self._vector_cache[key] = self._vector(normalize(text, self.config.stopwords))
        return self._vector_cache[key]

    def _cosine(self, a: tuple[dict[str, float], float], b: tuple[dict[str, float], float]) -> float:
        wa, na = a
        wb, nb = b
        if na == 0.0 or nb == 0.0:
            return 0.0
        dot = sum(w * wb[tok] for tok, w in wa.items() if tok in wb)
        return dot / (na * nb)

    def score_attempt(self, attempt: str, exercise: Exercise) -> MatchResult:
        """Best cosine across expectations, plus the keyword gate.

        Raises EmptyAttemptError when the attempt has no usable tokens;
        ties between expectations break to the lowest expectation id.
        """
        tokens = normalize(attempt, self.config.stopwords)
        if not tokens:
            raise EmptyAttemptError("attempt contains no usable tokens")
        attempt_vec = self._vector(tokens)
        token_set = set(tokens)

        best_score = -1.0
        best_exp = exercise.expectations[0]
        for exp in sorted(exercise.expectations, key=lambda e: e.id):
            score = self._cosine(attempt_vec, self._expectation_vector(exp.id, exp.text))
            if score > best_score:
                best_score, best_exp = score, exp
        misses = tuple(kw for kw in best_exp.required_keywords if kw.lower() not in token_set)
        label = (
            MatchLabel.CORRECT
            if best_score >= self.config.threshold and not misses
            else MatchLabel.INCORRECT
        )
        return MatchResult(label, best_score, best_exp.id, misses)

    def score_against_text(
        self, attempt: str, reference: str, threshold: float | None = None
    ) -> MatchResult:
        """Grade against an ad-hoc reference (follow-up questions)."""
        tokens = normalize(attempt, self.config.stopwords)
        if not tokens:
            raise EmptyAttemptError("reply contains no usable tokens")
        score = self._cosine(
            self._vector(tokens),
            self._vector(normalize(reference, self.config.stopwords)),
        )
        cutoff = self.config.threshold if threshold is None else threshold
        label = MatchLabel.CORRECT if score >= cutoff else MatchLabel.INCORRECT
        return MatchResult(label, score, "")


def classify_mcq(selected_option_index: int, payload: InterventionPayload) -> MatchResult:
    """Exact grading for multiple-choice selections."""
    if payload.kind is not InterventionKind.MULTIPLE_CHOICE or not payload.options:
        raise ValueError("payload is not a multiple-choice intervention")
    if not 0 <= selected_option_index < len(payload.options):
        raise IndexOutOfRangeError(
            f"option index {selected_option_index} out of range for {len(payload.options)} options")
    option = payload.options[selected_option_index]
    if option.is_correct:
        return MatchResult(MatchLabel.CORRECT, 1.0, "")
    return MatchResult(MatchLabel.INCORRECT, 0.0, "")


def correct_option_index(payload: InterventionPayload) -> int:
    if not payload.options:
        raise ValueError("payload has no options")
    for i, option in enumerate(payload.options):
        if option.is_correct:
            return i
    raise ValueError("payload has no correct option")
