"""HTTP/JSON endpoints over a TutorService instance."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .content import ContentError, course_to_dict
from .curriculum import UnknownSkillError as CurriculumUnknownSkill
from .fsm import IllegalActionError
from .service import NotFoundError, SessionClosedError, TutorService, UnknownSkillError
from .wire import action_from_wire


class StudentCreateBody(BaseModel):
    course_id: str
    selected_skills: list[str] | None = None
    answers: dict[str, str] = Field(default_factory=dict)


class SessionCreateBody(BaseModel):
    student_id: str
    course_id: str
    variant: str = "full_its"


class ActionBody(BaseModel):
    kind: str
    text: str | None = None
    option_index: int | None = None


def create_app(service: TutorService) -> FastAPI:
    app = FastAPI(title="tutorloop", version="0.1.0")

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (UnknownSkillError, CurriculumUnknownSkill, ContentError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except SessionClosedError as exc:
            raise HTTPException(status_code=409, detail=f"session closed: {exc}") from exc
        except IllegalActionError as exc:
            raise HTTPException(status_code=409, detail=f"illegal action: {exc}") from exc

    @app.post("/students")
    def create_student(body: StudentCreateBody):
        profile = guard(service.create_student, body.course_id,
                        body.selected_skills, body.answers)
        return {
            "student_id": profile.student_id,
            "selected_skills": sorted(profile.selected_skill_ids),
            "proficiency": profile.proficiency,
        }

    @app.post("/sessions")
    def create_session(body: SessionCreateBody):
        session_id, events = guard(service.create_session,
                                   body.student_id, body.course_id, body.variant)
        return {"session_id": session_id, "events": events}

    @app.post("/sessions/{session_id}/actions")
    def post_action(session_id: str, body: ActionBody):
        action = guard(action_from_wire, body.model_dump(exclude_none=True))
        events = guard(service.post_action, session_id, action)
        return {"events": events}

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, since: int = 0):
        return {"events": guard(service.get_events, session_id, since)}

    @app.get("/metrics")
    def metrics():
        return service.metrics()

    @app.post("/courses")
    def upload_course(body: dict):
        course_id = guard(service.upload_course, body)
        return {"course_id": course_id}

    @app.get("/courses/{course_id}")
    def get_course(course_id: str):
        return course_to_dict(guard(service.get_course, course_id))

    return app
