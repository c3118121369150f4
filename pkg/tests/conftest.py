from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # test-local helpers (oracles)

from tutorloop.content import Course, load_course
from tutorloop.data import data_path
from tutorloop.matcher import TfidfMatcher

FIXTURES = Path(__file__).parent / "fixtures"
INVALID_BUNDLES = FIXTURES / "invalid_bundles"


@pytest.fixture(scope="session")
def course() -> Course:
    return load_course(data_path("courses", "ml-basics"))


@pytest.fixture(scope="session")
def matcher(course: Course) -> TfidfMatcher:
    return TfidfMatcher(course)


@pytest.fixture(scope="session")
def labeled_corpus() -> list[dict]:
    doc = json.loads(data_path("corpus", "labeled_attempts.json").read_text(encoding="utf-8"))
    return doc["items"]


@pytest.fixture()
def exercises(course: Course) -> dict:
    return {ex.id: ex for ex in course.exercises()}
