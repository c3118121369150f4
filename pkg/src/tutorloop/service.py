"""Live tutoring sessions over HTTP, event-sourced onto a JSONL log.

One process, one global write lock: the log's line order IS the
serialization order, which keeps per-session linearizability and the
single-policy-writer contract trivially true at desk scale. Policy
updates apply synchronously under that lock, so a selection always sees
every update whose reward resolved before the request arrived (staleness
zero, and no update can be lost). Every piece of server state (profiles,
curriculum cursors, session progress, the policy model) is reconstructible
by re-executing the log: server-issued ids and every random draw are
derived from stable strings, so a rebuild replays into exactly the state
the live process held.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .content import Course, Exercise, UnitKind, course_from_dict, course_to_dict, load_course
from .curriculum import Background, Curriculum, StudentProfile, generate_curriculum
from .eventlog import EventLogWriter, read_records
from .fsm import (
    EventKind,
    FeedbackAbout,
    IllegalActionError,
    SessionMode,
    SessionState,
    StepDeps,
    StudentAction,
    TutorEvent,
    start_exercise,
    step,
)
from .matcher import MatcherConfig, TfidfMatcher, load_matcher_config
from .policy import PolicyModel, select_intervention, update_policy
from .simulator import XMOOC_MCQ_RATE, Variant
from .wire import action_to_wire, event_to_wire, session_done_wire, video_event_wire

# Questionnaire answer -> initial proficiency estimate
PROFICIENCY_FROM_ANSWER = {
    Background.NONE: 0.2,
    Background.SOME: 0.5,
    Background.STRONG: 0.9,
}
DEFAULT_PROFICIENCY_ESTIMATE = 0.2


class NotFoundError(Exception):
    pass


class UnknownSkillError(Exception):
    pass


class SessionClosedError(Exception):
    pass


@dataclass
class SessionRecord:
    session_id: str
    student_id: str
    course_id: str
    variant: Variant
    curriculum: Curriculum
    event_seq: int = 0
    exercise_state: SessionState | None = None
    current_exercise: Exercise | None = None
    pending_rewards: list[tuple[list[float] | None, Any]] = field(default_factory=list)
    units_started: int = 0
    done: bool = False


class TutorService:
    """All engine state behind a single lock; see module docstring."""

    def __init__(
        self,
        content_dir: str | Path | None = None,
        log_path: str | Path | None = None,
        policy: PolicyModel | None = None,
        matcher_config: MatcherConfig | None = None,
    ):
        self._lock = threading.RLock()
        self._courses: dict[str, Course] = {}
        self._matchers: dict[str, TfidfMatcher] = {}
        self._matcher_config = matcher_config
        self._students: dict[str, StudentProfile] = {}
        self._student_meta: dict[str, dict] = {}
        self._curricula: dict[tuple[str, str], Curriculum] = {}
        self._sessions: dict[str, SessionRecord] = {}
        self._policy = policy if policy is not None else PolicyModel()
        self._records: list[dict] = []
        self._writer = EventLogWriter(log_path) if log_path else None
        self._student_seq = 0
        self._session_seq = 0

        if content_dir is not None:
            base = Path(content_dir)
            bundles = sorted(p.parent for p in base.glob("*/course.json"))
            if (base / "course.json").exists():
                bundles.insert(0, base)
            for bundle in bundles:
                course = load_course(bundle)
                # a bundle may ship its own matcher.json (+ stopword file)
                config = self._matcher_config or load_matcher_config(bundle)
                self._install_course(course, config)

    # ------------------------------------------------------------------
    # Content
    # ------------------------------------------------------------------

    def _install_course(self, course: Course, config: MatcherConfig | None = None) -> None:
        self._courses[course.id] = course
        self._matchers[course.id] = TfidfMatcher(course, config or self._matcher_config)

    def upload_course(self, doc: dict, *, lenient: bool = False) -> str:
        with self._lock:
            course = course_from_dict(doc, lenient=lenient)
            self._install_course(course)
            self._append({
                "type": "course_uploaded", "event_id": 0, "session_id": None,
                "student_id": None, "variant": None, "ts": time.time(),
                "payload": {"course": course_to_dict(course)},
            })
            return course.id

    def get_course(self, course_id: str) -> Course:
        course = self._courses.get(course_id)
        if course is None:
            raise NotFoundError(f"no course '{course_id}'")
        return course

    # ------------------------------------------------------------------
    # Students and sessions
    # ------------------------------------------------------------------

    def create_student(
        self,
        course_id: str,
        selected_skills: list[str] | None = None,
        answers: dict[str, str] | None = None,
    ) -> StudentProfile:
        with self._lock:
            course = self.get_course(course_id)
            known = course.skill_ids()
            selected = set(selected_skills) if selected_skills else set(known)
            unknown = selected - known
            if unknown:
                raise UnknownSkillError(f"unknown skill(s): {sorted(unknown)}")
            parsed: dict[str, Background] = {}
            for skill_id, answer in (answers or {}).items():
                if skill_id not in known:
                    raise UnknownSkillError(f"unknown skill '{skill_id}' in answers")
                parsed[skill_id] = Background(answer)

            self._student_seq += 1
            student_id = f"s{self._student_seq:04d}"
            profile = StudentProfile(
                student_id=student_id,
                selected_skill_ids=selected,
                background_answers=parsed,
                proficiency={sid: PROFICIENCY_FROM_ANSWER[a] for sid, a in parsed.items()},
            )
            self._students[student_id] = profile
            self._student_meta[student_id] = {"course_id": course_id}
            self._append({
                "type": "student_created", "event_id": 0, "session_id": None,
                "student_id": student_id, "variant": None, "ts": time.time(),
                "payload": {
                    "course_id": course_id,
                    "selected_skills": sorted(selected),
                    "answers": {sid: a.value for sid, a in sorted(parsed.items())},
                },
            })
            return profile

    def create_session(
        self, student_id: str, course_id: str, variant: str = Variant.FULL_ITS.value
    ) -> tuple[str, list[dict]]:
        with self._lock:
            profile = self._students.get(student_id)
            if profile is None:
                raise NotFoundError(f"no student '{student_id}'")
            course = self.get_course(course_id)

            key = (student_id, course_id)
            if key not in self._curricula:
                self._curricula[key] = generate_curriculum(course, profile)
            profile.sessions_count += 1

            self._session_seq += 1
            session_id = f"sess{self._session_seq:04d}"
            sess = SessionRecord(
                session_id=session_id, student_id=student_id, course_id=course_id,
                variant=Variant(variant), curriculum=self._curricula[key])
            self._sessions[session_id] = sess
            self._append(self._session_scoped(sess, "session_created", {
                "student_id": student_id, "course_id": course_id,
                "variant": sess.variant.value,
            }))
            events = self._advance_units(sess, course)
            return session_id, events

    # ------------------------------------------------------------------
    # The action path
    # ------------------------------------------------------------------

    def post_action(self, session_id: str, action: StudentAction) -> list[dict]:
        with self._lock:
            sess = self._sessions.get(session_id)
            if sess is None:
                raise NotFoundError(f"no session '{session_id}'")
            if sess.done or sess.exercise_state is None:
                raise SessionClosedError(f"session '{session_id}' is over")

            course = self.get_course(sess.course_id)
            state, events = step(sess.exercise_state, action, self._step_deps(sess))

            # arrival order: the action record precedes the events it caused,
            # and is echoed to the client so an incrementally built transcript
            # matches a reload from since=0
            action_record = self._session_scoped(sess, "student_action", action_to_wire(action))
            self._append(action_record)
            out = [{"event_id": action_record["event_id"], "author": "student",
                    "payload": action_record["payload"]}]
            out.extend(self._emit(sess, events))
            if state.complete:
                sess.exercise_state = None
                sess.current_exercise = None
                out.extend(self._advance_units(sess, course))
            return out

    def get_events(self, session_id: str, since: int = 0) -> list[dict]:
        with self._lock:
            if session_id not in self._sessions:
                raise NotFoundError(f"no session '{session_id}'")
            out = []
            for record in self._records:
                if record.get("session_id") != session_id:
                    continue
                if record["type"] not in ("tutor_event", "student_action"):
                    continue
                if record["event_id"] <= since:
                    continue
                author = "student" if record["type"] == "student_action" else "tutor"
                out.append({"event_id": record["event_id"], "author": author,
                            "payload": record["payload"]})
            return out

    def metrics(self) -> dict:
        from .logwalk import walk_records
        with self._lock:
            gain = walk_records(self._records)
            returning = sum(p.sessions_count >= 2 for p in self._students.values())
            spans = []
            for sess in self._sessions.values():
                ts = [r["ts"] for r in self._records if r.get("session_id") == sess.session_id]
                if len(ts) >= 2:
                    spans.append((max(ts) - min(ts)) / 60.0)
            out = {
                "students": len(self._students),
                "sessions": len(self._sessions),
                "returning_students": returning,
                "returning_pct": 100.0 * returning / len(self._students) if self._students else 0.0,
                "avg_session_minutes": sum(spans) / len(spans) if spans else 0.0,
                "learning_gain": {
                    "numerator": gain.numerator,
                    "denominator": gain.denominator,
                    "pct": 100.0 * gain.numerator / gain.denominator if gain.denominator else None,
                },
            }
            return out

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _step_deps(self, sess: SessionRecord) -> StepDeps:
        profile = self._students[sess.student_id]
        choose_rng = random.Random(f"{sess.session_id}:choose:{sess.event_seq}")
        return StepDeps(
            exercise=sess.current_exercise,
            matcher=self._matchers[sess.course_id],
            profile=profile,
            choose=lambda ctx, avail, rng: select_intervention(ctx, avail, self._policy, rng),
            rng=choose_rng,
        )

    def _session_scoped(self, sess: SessionRecord, record_type: str, payload: dict) -> dict:
        sess.event_seq += 1
        return {
            "type": record_type, "event_id": sess.event_seq,
            "session_id": sess.session_id, "student_id": sess.student_id,
            "variant": sess.variant.value, "ts": time.time(), "payload": payload,
        }

    def _append(self, record: dict) -> None:
        self._records.append(record)
        if self._writer is not None:
            self._writer.append(record)

    def _emit(self, sess: SessionRecord, events: list[TutorEvent]) -> list[dict]:
        out = []
        for event in events:
            event.timestamp = time.time()
            wire = event_to_wire(event)
            record = self._session_scoped(sess, "tutor_event", wire)
            self._append(record)
            out.append({"event_id": record["event_id"], "author": "tutor", "payload": wire})
            self._track_rewards(sess, event)
        return out

    def _emit_raw(self, sess: SessionRecord, payload: dict) -> dict:
        record = self._session_scoped(sess, "tutor_event", dict(payload, timestamp=time.time()))
        self._append(record)
        return {"event_id": record["event_id"], "author": "tutor",
                "payload": record["payload"]}

    def _track_rewards(self, sess: SessionRecord, event: TutorEvent) -> None:
        if event.kind is EventKind.INTERVENTION:
            sess.pending_rewards.append((event.context, event.intervention_kind))
        elif event.about is FeedbackAbout.ATTEMPT:
            self._resolve_rewards(sess, 1 if event.kind is EventKind.FEEDBACK_CORRECT else 0)
        elif event.kind is EventKind.EXERCISE_COMPLETE:
            self._resolve_rewards(sess, 0)

    def _resolve_rewards(self, sess: SessionRecord, reward: int) -> None:
        while sess.pending_rewards:
            ctx, kind = sess.pending_rewards.pop(0)
            if ctx is not None:
                update_policy(self._policy, ctx, kind, reward)

    def _advance_units(self, sess: SessionRecord, course: Course) -> list[dict]:
        """Serve videos until an exercise starts or the curriculum ends."""
        out: list[dict] = []
        while sess.exercise_state is None and not sess.done:
            unit_id = sess.curriculum.next_unit()
            if unit_id is None:
                out.append(self._emit_raw(sess, session_done_wire()))
                sess.done = True
                break
            unit = course.unit_by_id(unit_id)
            sess.units_started += 1
            if unit.kind is UnitKind.VIDEO:
                video = unit.payload
                out.append(self._emit_raw(
                    sess, video_event_wire(video.id, video.url, video.duration_s)))
                continue
            mode = SessionMode.DIALOGUE
            if sess.variant is Variant.XMOOC_ITS:
                coin = random.Random(f"{sess.session_id}:unit:{sess.units_started}:mode")
                if coin.random() < XMOOC_MCQ_RATE:
                    mode = SessionMode.MCQ_QUIZ
            state, events = start_exercise(unit.payload, mode=mode)
            sess.exercise_state = state
            sess.current_exercise = unit.payload
            out.extend(self._emit(sess, events))
        return out

    # ------------------------------------------------------------------
    # Snapshots and rebuild
    # ------------------------------------------------------------------

    def snapshot_dict(self) -> dict:
        with self._lock:
            from .policy import policy_to_dict
            students = {}
            for sid, profile in sorted(self._students.items()):
                students[sid] = {
                    "selected_skills": sorted(profile.selected_skill_ids),
                    "answers": {k: v.value for k, v in sorted(profile.background_answers.items())},
                    "proficiency": {k: repr(v) for k, v in sorted(profile.proficiency.items())},
                    "sessions_count": profile.sessions_count,
                }
            sessions = {}
            for sess_id, sess in sorted(self._sessions.items()):
                state = sess.exercise_state
                sessions[sess_id] = {
                    "student_id": sess.student_id,
                    "course_id": sess.course_id,
                    "variant": sess.variant.value,
                    "cursor": sess.curriculum.cursor,
                    "event_seq": sess.event_seq,
                    "done": sess.done,
                    "exercise": None if state is None else {
                        "exercise_id": state.exercise_id,
                        "fsm_state": state.fsm_state.value,
                        "mode": state.mode.value,
                        "attempts": len(state.attempts),
                        "attempts_remaining": state.attempts_remaining,
                        "interventions_given": [[k.value, i] for k, i in state.interventions_given],
                        "outcome": state.outcome.value if state.outcome else None,
                    },
                }
            return {
                "students": students,
                "sessions": sessions,
                "curricula": {
                    f"{sid}/{cid}": list(cur.unit_ids)
                    for (sid, cid), cur in sorted(self._curricula.items())
                },
                "policy": policy_to_dict(self._policy),
                "counters": {"student_seq": self._student_seq, "session_seq": self._session_seq},
                "courses": sorted(self._courses),
            }

    def snapshot_bytes(self) -> bytes:
        return (json.dumps(self.snapshot_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def rebuild(
        cls,
        log_path: str | Path,
        content_dir: str | Path | None = None,
        *,
        reopen_log: bool = False,
        matcher_config: MatcherConfig | None = None,
    ) -> "TutorService":
        """Reconstruct a service by re-executing its event log.

        Tutor events are regenerated by the same deterministic engine and
        verified field-for-field (timestamps aside) against the log; the
        logged timestamps are then restored so the in-memory mirror matches
        the file byte for byte.
        """
        svc = cls(content_dir=content_dir, log_path=None, matcher_config=matcher_config)
        logged: list[dict] = []
        for record in read_records(log_path):
            logged.append(record)
            rtype = record["type"]
            payload = record["payload"]
            if rtype == "course_uploaded":
                svc.upload_course(payload["course"])
            elif rtype == "student_created":
                svc.create_student(
                    payload["course_id"],
                    selected_skills=payload["selected_skills"],
                    answers=payload["answers"])
            elif rtype == "session_created":
                svc.create_session(
                    payload["student_id"], payload["course_id"], payload["variant"])
            elif rtype == "student_action":
                from .wire import action_from_wire
                svc.post_action(record["session_id"], action_from_wire(payload))
            # tutor_event records regenerate during the operations above

        if len(svc._records) != len(logged):
            raise AssertionError(
                f"replay divergence: regenerated {len(svc._records)} records, "
                f"log holds {len(logged)}")
        for i, (mine, theirs) in enumerate(zip(svc._records, logged)):
            a = {k: v for k, v in mine.items() if k != "ts"}
            b = {k: v for k, v in theirs.items() if k != "ts"}
            pa = dict(a.pop("payload"))
            pb = dict(b.pop("payload"))
            pa.pop("timestamp", None)
            pb.pop("timestamp", None)
            if a != b or pa != pb:
                raise AssertionError(f"replay divergence at record {i + 1}: {a} vs {b}")
            mine["ts"] = theirs["ts"]
            if "timestamp" in theirs["payload"]:
                mine["payload"]["timestamp"] = theirs["payload"]["timestamp"]

        if reopen_log:
            svc._writer = EventLogWriter(log_path)
        return svc

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
