"""HTTP facade and process composition.

Owns persistence (file documents under the store directory, atomic
writes), runs the ingest pipeline stage by stage with the video's status
advancing monotonically (ingested -> segmented -> planned), and hosts
sessions. Mutations are serialized per video / session / student id; a
restart resumes any video stuck between stages without repeating the
stages already persisted.

Sessions are created by re-planning the stored segment knowledge against
the requesting student's model, so returning students get moves matched
to their mastery while the stored video record keeps the cold-start plan.
"""

from __future__ import annotations

import logging
import os
import threading
from contextlib import asynccontextmanager

from fastapi import BackgroundTasks, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import errors
from .clock import SystemClock, clock_for_mode
from .engine import ConversationEngine, SessionState
from .gateway import LLMGateway
from .knowledge import KnowledgeItem
from .planner import DSLDocument, PlannerConfig, build_dsl
from .segmentation import VideoSegment, segment_pipeline
from .storage import checksum, read_checksummed, write_checksummed
from .student import ModelStore, StudentModel
from .transcript import Transcript, goals_from_dict

log = logging.getLogger(__name__)

API_VERSION = 1
PLANNING_STUDENT = "__default__"


class TutorService:
    def __init__(self, store_dir: str, gateway: LLMGateway, clock=None):
        self.store_dir = store_dir
        self.gateway = gateway
        self.clock = clock or SystemClock()
        self.videos_dir = os.path.join(store_dir, "videos")
        self.sessions_dir = os.path.join(store_dir, "sessions")
        os.makedirs(self.videos_dir, exist_ok=True)
        os.makedirs(self.sessions_dir, exist_ok=True)
        self.models = ModelStore(store_dir)
        self.engine = ConversationEngine(gateway, self.models, clock=self.clock)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    # -- video records ----------------------------------------------------

    def _video_path(self, video_id: str) -> str:
        return os.path.join(self.videos_dir, f"{video_id}.json")

    def _load_video(self, video_id: str) -> dict:
        path = self._video_path(video_id)
        if not os.path.exists(path):
            raise errors.NotFound(f"video {video_id!r} not found")
        return read_checksummed(path)

    def _save_video(self, record: dict) -> None:
        write_checksummed(self._video_path(record["video_id"]), record)

    def ingest_video(self, transcript_doc: dict, goals_doc: dict, title: str = "") -> str:
        Transcript.from_dict(transcript_doc)  # raises MalformedDocument
        goals_from_dict(goals_doc)
        video_id = "v-" + checksum({"transcript": transcript_doc, "goals": goals_doc})[:12]
        record = {
            "video_id": video_id,
            "title": title,
            "transcript": transcript_doc,
            "goals": goals_doc,
            "status": "ingested",
            "segments": [],
            "dsl_per_segment": [],
        }
        self._save_video(record)
        return video_id

    def run_pipeline(self, video_id: str) -> dict:
        """Advance the video through segmentation and planning, persisting
        after each stage so a crash resumes where it left off."""
        with self._lock(f"video:{video_id}"):
            record = self._load_video(video_id)
            if record["status"] == "ingested":
                transcript = Transcript.from_dict(record["transcript"])
                goals = goals_from_dict(record["goals"])
                segments = segment_pipeline(transcript, goals, self.gateway)
                record["segments"] = [segment.to_dict() for segment in segments]
                record["status"] = "segmented"
                self._save_video(record)
            if record["status"] == "segmented":
                from .knowledge import extract_knowledge

                documents = []
                for raw in record["segments"]:
                    segment = VideoSegment.from_dict(raw)
                    items = extract_knowledge(segment, self.gateway)
                    if not items:
                        documents.append(None)
                        continue
                    model = StudentModel(student_id=PLANNING_STUDENT)
                    dsl = build_dsl(
                        items, model,
                        segment_goal_id=segment.goal_id,
                        student_id=PLANNING_STUDENT,
                        gateway=self.gateway,
                        created_at=self.clock.now(),
                    )
                    documents.append(dsl.to_dict())
                record["dsl_per_segment"] = documents
                record["status"] = "planned"
                self._save_video(record)
            return record

    def resume_incomplete(self) -> None:
        for filename in sorted(os.listdir(self.videos_dir)):
            if not filename.endswith(".json"):
                continue
            record = read_checksummed(os.path.join(self.videos_dir, filename))
            if record["status"] != "planned":
                log.info("resuming pipeline for video %s from status %s",
                         record["video_id"], record["status"])
                self.run_pipeline(record["video_id"])

    # -- sessions ------------------------------------------------------------

    def _session_path(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, f"{session_id}.json")

    def _load_session(self, session_id: str) -> SessionState:
        path = self._session_path(session_id)
        if not os.path.exists(path):
            raise errors.NotFound(f"session {session_id!r} not found")
        return SessionState.from_dict(read_checksummed(path))

    def _save_session(self, session: SessionState) -> None:
        write_checksummed(self._session_path(session.session_id), session.to_dict())

    def create_session(self, student_id: str, video_id: str, segment_index: int = 0,
                       config: PlannerConfig | None = None) -> str:
        record = self._load_video(video_id)
        if record["status"] != "planned":
            raise errors.PipelineIncomplete(
                f"video {video_id} is {record['status']}, not planned"
            )
        if not 0 <= segment_index < len(record["segments"]):
            raise errors.NotFound(f"video {video_id} has no segment {segment_index}")
        stored_dsl = record["dsl_per_segment"][segment_index]
        if stored_dsl is None:
            raise errors.PipelineIncomplete(
                f"segment {segment_index} produced no knowledge; nothing to teach"
            )
        with self._lock(f"student:{student_id}"):
            items = [
                KnowledgeItem.from_dict(raw) for raw in stored_dsl["knowledge"]
            ]
            for item in items:
                item.skill_ids = []  # relink against this student's registry
            model = self.models.load(student_id)
            dsl = build_dsl(
                items, model,
                segment_goal_id=stored_dsl["segment_goal_id"],
                student_id=student_id,
                gateway=self.gateway,
                config=config,
                created_at=self.clock.now(),
            )
            self.models.save(model)
        ordinal = len([
            name for name in os.listdir(self.sessions_dir)
            if name.startswith(f"sess-{video_id}-{segment_index}-")
        ])
        session_id = f"sess-{video_id}-{segment_index}-{ordinal:03d}"
        segment = VideoSegment.from_dict(record["segments"][segment_index])
        with self._lock(f"session:{session_id}"):
            session = self.engine.start_session(
                student_id, dsl,
                session_id=session_id,
                segment_excerpt=segment.text()[:500],
            )
            self._save_session(session)
        return session_id

    def next_message(self, session_id: str) -> dict:
        with self._lock(f"session:{session_id}"):
            session = self._load_session(session_id)
            message = self.engine.next_tutor_message(session)
            self._save_session(session)
            return message

    def reply(self, session_id: str, text: str) -> dict:
        with self._lock(f"session:{session_id}"):
            session = self._load_session(session_id)
            assessment, next_message = self.engine.handle_student_reply(session, text)
            self._save_session(session)
            return {"assessment": assessment.to_dict(), "next_message": next_message}

    def events(self, session_id: str, since: int = 0) -> dict:
        session = self._load_session(session_id)
        return {
            "events": session.events[since:],
            "next_since": len(session.events),
            "status": session.status,
            "pending": session.pending_step is not None,
        }

    def replan_segment(self, video_id: str, segment_index: int,
                       student_id: str = PLANNING_STUDENT,
                       thresholds: dict | None = None) -> dict:
        record = self._load_video(video_id)
        if record["status"] != "planned":
            raise errors.PipelineIncomplete(f"video {video_id} is {record['status']}")
        if not 0 <= segment_index < len(record["segments"]):
            raise errors.NotFound(f"video {video_id} has no segment {segment_index}")
        stored_dsl = record["dsl_per_segment"][segment_index]
        if stored_dsl is None:
            raise errors.NotFound(f"segment {segment_index} has no plan")
        config = PlannerConfig()
        if thresholds:
            config = PlannerConfig(
                low_mastery=thresholds.get("low", config.low_mastery),
                mid_mastery=thresholds.get("mid", config.mid_mastery),
                high_mastery=thresholds.get("high", config.high_mastery),
            )
        try:
            config.validate()
        except ValueError as exc:
            raise errors.MalformedDocument(str(exc)) from exc
        items = [KnowledgeItem.from_dict(raw) for raw in stored_dsl["knowledge"]]
        for item in items:
            item.skill_ids = []
        with self._lock(f"student:{student_id}"):
            model = self.models.load(student_id)
            dsl = build_dsl(
                items, model,
                segment_goal_id=stored_dsl["segment_goal_id"],
                student_id=student_id,
                gateway=self.gateway,
                config=config,
                created_at=self.clock.now(),
            )
            self.models.save(model)
        record["dsl_per_segment"][segment_index] = dsl.to_dict()
        self._save_video(record)
        return dsl.to_dict()

    def student_snapshot(self, student_id: str) -> dict:
        model = self.models.load(student_id)
        skills = [
            {
                "skill_id": record.skill_id,
                "name": record.name,
                "p_learn": record.p_learn,
                "observations": record.observations,
            }
            for record in sorted(
                model.skills.values(), key=lambda r: (-r.p_learn, r.skill_id)
            )
        ]
        return {
            "student_id": student_id,
            "skills": skills,
            "goal_mastery": model.goal_mastery,
            "version": model.version,
        }


# --- HTTP layer -----------------------------------------------------------


class IngestBody(BaseModel):
    transcript: dict
    goals: dict
    title: str = ""


class SessionBody(BaseModel):
    student_id: str
    video_id: str
    segment_index: int = 0


class ReplyBody(BaseModel):
    text: str


class ReplanBody(BaseModel):
    student_id: str = PLANNING_STUDENT
    thresholds: dict = {}


_STATUS_BY_ERROR = [
    (errors.NotFound, 404, "not_found"),
    (errors.PipelineIncomplete, 409, "pipeline_incomplete"),
    (errors.NoPendingStep, 409, "no_pending_step"),
    (errors.PendingReply, 409, "pending_reply"),
    (errors.SessionCompleted, 409, "session_completed"),
    (errors.VersionConflict, 409, "version_conflict"),
    (errors.MalformedDocument, 422, "malformed_document"),
    (errors.FixtureMiss, 502, "fixture_miss"),
    (errors.ProviderUnreachable, 502, "provider_unreachable"),
]


def _error_response(exc: Exception) -> JSONResponse:
    for error_type, status, code in _STATUS_BY_ERROR:
        if isinstance(exc, error_type):
            detail = getattr(exc, "detail", {})
            return JSONResponse(
                status_code=status,
                content={"code": code, "message": str(exc), "detail": detail},
            )
    log.exception("unhandled service error")
    return JSONResponse(
        status_code=500,
        content={"code": "internal", "message": str(exc), "detail": {}},
    )


def _ok(payload: dict, status_code: int = 200) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"api_version": API_VERSION, **payload})


def create_app(service: TutorService, ui_dir: str | None = None,
               api_token: str | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        service.resume_incomplete()
        yield

    app = FastAPI(title="cogtutor", lifespan=lifespan)

    token = api_token if api_token is not None else os.environ.get("COGTUTOR_API_TOKEN", "")
    if token:
        @app.middleware("http")
        async def require_token(request: Request, call_next):
            # static assets stay open; the API wants the bearer token
            if not request.url.path.startswith("/app"):
                supplied = request.headers.get("Authorization", "")
                if supplied != f"Bearer {token}":
                    return JSONResponse(
                        status_code=401,
                        content={"code": "unauthorized",
                                 "message": "missing or wrong API token", "detail": {}},
                    )
            return await call_next(request)

    @app.exception_handler(errors.CogTutorError)
    async def handle_domain_error(request: Request, exc: errors.CogTutorError):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"code": "malformed_body", "message": "request body failed validation",
                     "detail": {"errors": exc.errors()}},
        )

    @app.post("/videos", status_code=201)
    def post_video(body: IngestBody, background: BackgroundTasks):
        video_id = service.ingest_video(body.transcript, body.goals, body.title)
        background.add_task(service.run_pipeline, video_id)
        return _ok({"video_id": video_id, "status": "ingested"}, status_code=201)

    @app.get("/videos/{video_id}")
    def get_video(video_id: str):
        record = service._load_video(video_id)
        return _ok({
            "video_id": record["video_id"],
            "title": record["title"],
            "status": record["status"],
            "segment_count": len(record["segments"]),
            "goals": record["goals"],
        })

    @app.get("/videos/{video_id}/segments")
    def get_segments(video_id: str):
        record = service._load_video(video_id)
        return _ok({"segments": record["segments"], "status": record["status"]})

    @app.get("/videos/{video_id}/dsl")
    def get_dsl(video_id: str):
        record = service._load_video(video_id)
        return _ok({"dsl_per_segment": record["dsl_per_segment"], "status": record["status"]})

    @app.post("/videos/{video_id}/segments/{segment_index}/replan")
    def post_replan(video_id: str, segment_index: int, body: ReplanBody):
        dsl = service.replan_segment(video_id, segment_index, body.student_id, body.thresholds)
        return _ok({"dsl": dsl})

    @app.post("/sessions", status_code=201)
    def post_session(body: SessionBody):
        session_id = service.create_session(body.student_id, body.video_id, body.segment_index)
        return _ok({"session_id": session_id}, status_code=201)

    @app.get("/sessions/{session_id}/next")
    def get_next(session_id: str):
        return _ok({"message": service.next_message(session_id)})

    @app.post("/sessions/{session_id}/reply")
    def post_reply(session_id: str, body: ReplyBody):
        return _ok(service.reply(session_id, body.text))

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, since: int = 0):
        return _ok(service.events(session_id, since))

    @app.get("/students/{student_id}/model")
    def get_student(student_id: str):
        return _ok(service.student_snapshot(student_id))

    ui_dir = ui_dir or os.environ.get("COGTUTOR_UI_DIR")
    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/app", StaticFiles(directory=ui_dir, html=True), name="app")

    return app


def app_from_env() -> FastAPI:
    store_dir = os.environ.get("COGTUTOR_STORE_DIR", "./cogtutor-store")
    gateway = LLMGateway.from_env()
    clock = clock_for_mode(gateway.mode)
    return create_app(TutorService(store_dir, gateway, clock))
