from __future__ import annotations

import json
import random

import pytest
from fastapi.testclient import TestClient

from tutorloop.api import create_app
from tutorloop.data import data_path
from tutorloop.eventlog import CorruptLogError, read_records, replay_log_file
from tutorloop.fsm import StudentAction
from tutorloop.policy import PolicyModel, policy_to_dict
from tutorloop.service import (
    NotFoundError,
    SessionClosedError,
    TutorService,
    UnknownSkillError,
)

CONTENT = data_path("courses")


@pytest.fixture()
def service(tmp_path):
    svc = TutorService(content_dir=CONTENT, log_path=tmp_path / "events.jsonl")
    yield svc
    svc.close()


def drive_session(svc: TutorService, session_id: str, events: list[dict],
                  rng: random.Random, matcher, course) -> None:
    """Answer whatever the tutor last asked until the session ends."""
    by_id = {ex.id: ex for ex in course.exercises()}
    pending = [e for e in events if e["author"] == "tutor"]
    while True:
        actionable = None
        for item in pending:
            payload = item["payload"]
            if payload["kind"] in ("show_problem", "ask_retry", "ask_follow_up", "intervention"):
                actionable = payload
            if payload["kind"] == "session_done":
                return
        if actionable is None:
            return
        if actionable.get("options"):
            action = StudentAction.select_option(rng.randrange(len(actionable["options"])))
        elif actionable["kind"] == "ask_follow_up":
            action = StudentAction.follow_up_reply(actionable.get("text") or "ok")
        else:
            ex = by_id[actionable["exercise_id"]]
            roll = rng.random()
            if roll < 0.4:
                action = StudentAction.attempt(rng.choice(ex.expectations).text)
            elif roll < 0.5:
                action = StudentAction.skip()
            elif roll < 0.6:
                action = StudentAction.ask_help()
            else:
                action = StudentAction.attempt("zebra quagga xylophone")
        pending = svc.post_action(session_id, action)


# ---------------------------------------------------------------------------
# Students
# ---------------------------------------------------------------------------


def test_create_student_maps_answers_to_proficiency(service):
    profile = service.create_student(
        "ml-basics", answers={"ml-foundations": "none", "linear-regression": "some"})
    assert profile.proficiency == {"ml-foundations": 0.2, "linear-regression": 0.5}


def test_create_student_without_answers_defaults_lazily(service):
    profile = service.create_student("ml-basics")
    assert profile.proficiency == {}
    assert profile.selected_skill_ids == {"ml-foundations", "linear-regression"}


def test_student_ids_are_server_generated_and_distinct(service):
    a = service.create_student("ml-basics")
    b = service.create_student("ml-basics")
    assert a.student_id != b.student_id


def test_unknown_skill_in_answers_rejected(service):
    with pytest.raises(UnknownSkillError):
        service.create_student("ml-basics", answers={"quantum": "none"})


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


def test_first_session_serves_video_then_problem(service):
    profile = service.create_student("ml-basics")
    session_id, events = service.create_session(profile.student_id, "ml-basics")
    kinds = [e["payload"]["kind"] for e in events]
    assert kinds == ["show_video", "show_problem"]
    assert profile.sessions_count == 1


def test_second_session_resumes_the_cursor(service):
    profile = service.create_student("ml-basics")
    s1, events = service.create_session(profile.student_id, "ml-basics")
    # skipping exercise 1 makes session 1 present exercise 2 immediately
    events = service.post_action(s1, StudentAction.skip())
    assert events[-1]["payload"]["exercise_id"] == "ex-overfit"
    s2, events2 = service.create_session(profile.student_id, "ml-basics")
    assert profile.sessions_count == 2
    # the second session resumes after the last served unit, not from the top
    kinds = [e["payload"]["kind"] for e in events2]
    assert kinds == ["show_video", "show_problem"]
    assert events2[0]["payload"]["unit_id"] == "v-linear-models"
    assert events2[1]["payload"]["exercise_id"] == "ex-mse"


def test_unknown_course_or_student_is_not_found(service):
    with pytest.raises(NotFoundError):
        service.create_session("nope", "ml-basics")
    profile = service.create_student("ml-basics")
    with pytest.raises(NotFoundError):
        service.create_session(profile.student_id, "nope")


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


def test_incorrect_attempt_returns_feedback_and_intervention(service):
    profile = service.create_student("ml-basics")
    session_id, _ = service.create_session(profile.student_id, "ml-basics")
    events = service.post_action(session_id, StudentAction.attempt("zebra quagga xylophone"))
    # the echoed action comes first, then the tutor's response
    assert events[0]["author"] == "student"
    assert events[0]["payload"]["kind"] == "attempt"
    kinds = [e["payload"]["kind"] for e in events[1:]]
    assert kinds[0] == "feedback_incorrect"
    assert "intervention" in kinds


def test_action_after_session_done_is_closed(service, course, matcher):
    profile = service.create_student("ml-basics")
    session_id, events = service.create_session(profile.student_id, "ml-basics")
    drive_session(service, session_id, events, random.Random(0), matcher, course)
    with pytest.raises(SessionClosedError):
        service.post_action(session_id, StudentAction.skip())


def test_event_ids_are_gapless_per_session(service, course, matcher):
    profile = service.create_student("ml-basics")
    session_id, events = service.create_session(profile.student_id, "ml-basics")
    drive_session(service, session_id, events, random.Random(1), matcher, course)
    ids = [r["event_id"] for r in service._records if r.get("session_id") == session_id]
    assert ids == list(range(1, len(ids) + 1))


def test_get_events_since_filters_and_orders(service):
    profile = service.create_student("ml-basics")
    session_id, events = service.create_session(profile.student_id, "ml-basics")
    service.post_action(session_id, StudentAction.attempt("zebra quagga xylophone"))
    full = service.get_events(session_id, since=0)
    ids = [e["event_id"] for e in full]
    assert ids == sorted(ids)
    authors = {e["author"] for e in full}
    assert authors == {"tutor", "student"}
    last = full[-1]["event_id"]
    assert service.get_events(session_id, since=last) == []
    partial = service.get_events(session_id, since=full[2]["event_id"])
    assert [e["event_id"] for e in partial] == ids[3:]


# ---------------------------------------------------------------------------
# Event log replay
# ---------------------------------------------------------------------------


def test_empty_log_replays_to_pristine_policy(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    model = replay_log_file(path)
    assert policy_to_dict(model) == policy_to_dict(PolicyModel())


def test_live_policy_equals_replayed_policy_bit_for_bit(service, course, matcher, tmp_path):
    rng = random.Random(7)
    for i in range(6):
        profile = service.create_student("ml-basics")
        session_id, events = service.create_session(profile.student_id, "ml-basics")
        drive_session(service, session_id, events, rng, matcher, course)
    replayed = replay_log_file(service._writer.path)
    assert policy_to_dict(replayed) == policy_to_dict(service._policy)
    assert replayed.update_count > 0


def test_log_with_deleted_line_is_corrupt(service, course, matcher):
    profile = service.create_student("ml-basics")
    session_id, events = service.create_session(profile.student_id, "ml-basics")
    drive_session(service, session_id, events, random.Random(3), matcher, course)
    path = service._writer.path
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    del lines[4]  # session-scoped record: leaves a gap
    path.write_text("".join(lines), encoding="utf-8")
    with pytest.raises(CorruptLogError) as exc:
        list(read_records(path))
    assert exc.value.line_number == 5


def test_kill_and_replay_reproduces_state_byte_for_byte(service, course, matcher, tmp_path):
    rng = random.Random(11)
    students = []
    for i in range(5):
        profile = service.create_student(
            "ml-basics",
            answers={} if i % 2 else {"ml-foundations": "some"})
        students.append(profile.student_id)
        session_id, events = service.create_session(profile.student_id, "ml-basics")
        drive_session(service, session_id, events, rng, matcher, course)
    # a returning student and a mid-exercise session survive the kill too
    s2, ev2 = service.create_session(students[0], "ml-basics")
    if ev2 and ev2[-1]["payload"]["kind"] == "show_problem":
        service.post_action(s2, StudentAction.attempt("zebra quagga xylophone"))

    live = service.snapshot_bytes()
    rebuilt = TutorService.rebuild(service._writer.path, content_dir=CONTENT)
    assert rebuilt.snapshot_bytes() == live


def test_rebuild_includes_uploaded_courses(tmp_path, course):
    from tutorloop.content import course_to_dict
    log = tmp_path / "log.jsonl"
    svc = TutorService(content_dir=None, log_path=log)
    doc = course_to_dict(course)
    doc["id"] = "uploaded-course"
    svc.upload_course(doc)
    profile = svc.create_student("uploaded-course")
    svc.create_session(profile.student_id, "uploaded-course")
    live = svc.snapshot_bytes()
    rebuilt = TutorService.rebuild(log, content_dir=None)
    assert rebuilt.snapshot_bytes() == live


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


@pytest.fixture()
def client(tmp_path):
    svc = TutorService(content_dir=CONTENT, log_path=tmp_path / "http.jsonl")
    with TestClient(create_app(svc)) as tc:
        tc.service = svc
        yield tc
    svc.close()


def test_http_full_round_trip(client):
    created = client.post("/students", json={
        "course_id": "ml-basics", "answers": {"ml-foundations": "none"}})
    assert created.status_code == 200
    student_id = created.json()["student_id"]

    opened = client.post("/sessions", json={
        "student_id": student_id, "course_id": "ml-basics"})
    assert opened.status_code == 200
    session_id = opened.json()["session_id"]
    kinds = [e["payload"]["kind"] for e in opened.json()["events"]]
    assert kinds == ["show_video", "show_problem"]

    wrong = client.post(f"/sessions/{session_id}/actions", json={
        "kind": "attempt", "text": "zebra quagga xylophone"})
    assert wrong.status_code == 200
    kinds = [e["payload"]["kind"] for e in wrong.json()["events"]]
    assert kinds[0] == "attempt"  # the echoed student record
    assert kinds[1] == "feedback_incorrect"

    events = client.get(f"/sessions/{session_id}/events", params={"since": 0})
    assert events.status_code == 200
    assert len(events.json()["events"]) >= 4

    metrics = client.get("/metrics")
    assert metrics.status_code == 200
    assert metrics.json()["students"] == 1


def test_http_error_codes(client):
    assert client.post("/sessions", json={
        "student_id": "ghost", "course_id": "ml-basics"}).status_code == 404
    created = client.post("/students", json={
        "course_id": "ml-basics", "answers": {"bogus-skill": "none"}})
    assert created.status_code == 400
    assert client.get("/courses/none").status_code == 404


def test_http_illegal_action_is_409(client):
    student_id = client.post("/students", json={"course_id": "ml-basics"}).json()["student_id"]
    session_id = client.post("/sessions", json={
        "student_id": student_id, "course_id": "ml-basics"}).json()["session_id"]
    # selecting an option while the tutor awaits a free-text attempt
    response = client.post(f"/sessions/{session_id}/actions", json={
        "kind": "select_option", "option_index": 0})
    assert response.status_code == 409
    assert "illegal action" in response.json()["detail"]


def test_http_course_endpoints(client, course):
    fetched = client.get("/courses/ml-basics")
    assert fetched.status_code == 200
    assert fetched.json()["id"] == "ml-basics"
    doc = json.loads(json.dumps(fetched.json()))
    doc["id"] = "ml-basics-2"
    uploaded = client.post("/courses", json=doc)
    assert uploaded.status_code == 200
    assert client.get("/courses/ml-basics-2").status_code == 200
