"""HTTP consultation service: register trained models, open sessions, submit
answers one at a time, and read live per-diagnosis probabilities and the full
trajectory.

Sessions are append-only JSONL logs on disk; the in-memory state is a cache
that is rebuilt by replay on restart.  Retraction re-runs the remaining log
from scratch (residual updates are not invertible).  Predictions are always
produced by the library's ``run_consultation``, so service responses equal
library and CLI outputs exactly.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import Answer, ConsultationRecord, DataValidationError, parse_raw_value
from .model import ModnModel, Trajectory, load_model, run_consultation


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail or {}
        super().__init__(message)


class RegisterModelBody(BaseModel):
    path: str


class CreateSessionBody(BaseModel):
    model_id: str


class SubmitAnswerBody(BaseModel):
    feature_id: str
    value: object = None


class Session:
    """Answer log plus its lock; trajectory state is derived, never stored."""

    def __init__(self, session_id: str, model_id: str):
        self.session_id = session_id
        self.model_id = model_id
        self.answers: dict[str, object] = {}  # insertion-ordered feature_id -> value
        self.lock = threading.Lock()

    def record(self, model: ModnModel) -> ConsultationRecord:
        answers = [
            Answer(fid, value, model.feature(fid).simultaneity_group)
            for fid, value in self.answers.items()
        ]
        return ConsultationRecord(self.session_id, answers, {t: 0 for t in model.targets})


class ConsultationService:
    def __init__(self, state_dir: str | Path):
        self.state_dir = Path(state_dir)
        (self.state_dir / "sessions").mkdir(parents=True, exist_ok=True)
        self.registry_path = self.state_dir / "registry.json"
        self.models: dict[str, ModnModel] = {}
        self.model_paths: dict[str, str] = {}
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        self._restore()

    # -- persistence --------------------------------------------------------

    def _restore(self) -> None:
        if self.registry_path.exists():
            doc = json.loads(self.registry_path.read_text())
            for model_id, path in doc.items():
                self.models[model_id] = load_model(path)
                self.model_paths[model_id] = path
        for log in sorted((self.state_dir / "sessions").glob("*.jsonl")):
            session = self._replay(log)
            if session is not None:
                self.sessions[session.session_id] = session

    def _replay(self, log_path: Path) -> Session | None:
        session = None
        with open(log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                event = json.loads(line)
                kind = event["event"]
                if kind == "create":
                    session = Session(event["session_id"], event["model_id"])
                elif kind == "answer" and session is not None:
                    session.answers[event["feature_id"]] = event["value"]
                elif kind == "retract" and session is not None:
                    session.answers.pop(event["feature_id"], None)
        if session is not None and session.model_id not in self.models:
            return None  # model no longer registered; skip the stale log
        return session

    def _append_event(self, session: Session, event: dict) -> None:
        path = self.state_dir / "sessions" / f"{session.session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"ts": time.time(), **event}) + "\n")

    def _save_registry(self) -> None:
        self.registry_path.write_text(json.dumps(self.model_paths, indent=2))

    # -- registry -----------------------------------------------------------

    def register_model(self, path: str) -> str:
        try:
            model = load_model(path)
        except FileNotFoundError:
            raise ServiceError(404, "model_file_not_found", f"no model file at {path}")
        except OSError as exc:
            raise ServiceError(422, "invalid_model_file", f"cannot read {path}: {exc}")
        except ValueError as exc:
            raise ServiceError(422, "invalid_model_file", str(exc))
        model_id = hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]
        with self.registry_lock:
            self.models[model_id] = model
            self.model_paths[model_id] = str(path)
            self._save_registry()
        return model_id

    def get_model(self, model_id: str) -> ModnModel:
        try:
            return self.models[model_id]
        except KeyError:
            raise ServiceError(404, "unknown_model", f"model {model_id!r} is not registered")

    def get_session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ServiceError(404, "unknown_session", f"session {session_id!r} does not exist")

    # -- session operations --------------------------------------------------

    def create_session(self, model_id: str) -> Session:
        self.get_model(model_id)
        session = Session(uuid.uuid4().hex, model_id)
        self.sessions[session.session_id] = session
        self._append_event(session, {"event": "create", "session_id": session.session_id,
                                     "model_id": model_id})
        return session

    def trajectory(self, session: Session) -> Trajectory:
        model = self.get_model(session.model_id)
        return run_consultation(model, session.record(model))

    def predictions(self, session: Session) -> dict[str, float]:
        return self.trajectory(session).final_probabilities()

    def submit_answer(self, session: Session, feature_id: str, value) -> dict[str, float]:
        model = self.get_model(session.model_id)
        if feature_id not in set(model.feature_ids()):
            raise ServiceError(404, "unknown_feature", f"feature {feature_id!r} not in the schema")
        if feature_id in session.answers:
            raise ServiceError(409, "duplicate_answer", f"feature {feature_id!r} already answered",
                               {"feature_id": feature_id})
        feature = model.feature(feature_id)
        try:
            parsed = parse_raw_value(feature, value)
        except DataValidationError as exc:
            detail = {"feature_id": feature_id, "kind": feature.kind}
            if feature.kind == "categorical":
                detail["valid_levels"] = list(feature.levels)
            raise ServiceError(422, "invalid_value", str(exc), detail)
        session.answers[feature_id] = parsed
        self._append_event(session, {"event": "answer", "feature_id": feature_id, "value": parsed})
        return self.predictions(session)

    def retract_answer(self, session: Session, feature_id: str) -> dict[str, float]:
        if feature_id not in session.answers:
            raise ServiceError(404, "answer_not_found",
                               f"feature {feature_id!r} has no recorded answer")
        del session.answers[feature_id]
        self._append_event(session, {"event": "retract", "feature_id": feature_id})
        return self.predictions(session)

    def schema_payload(self, model_id: str) -> dict:
        model = self.get_model(model_id)
        return {
            "model_id": model_id,
            "state_dim": model.state_dim,
            "fingerprint": model.fingerprint,
            "targets": list(model.targets),
            "features": [
                {
                    "id": f.feature_id,
                    "kind": f.kind,
                    "question": f.question_text,
                    "group": f.simultaneity_group,
                    "levels": list(f.levels),
                }
                for f in model.schema
            ],
        }


def create_app(state_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    service = ConsultationService(state_dir)
    app = FastAPI(title="consultation service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def service_error_handler(_: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.post("/models")
    def register_model(body: RegisterModelBody):
        model_id = service.register_model(body.path)
        return {"model_id": model_id, **service.schema_payload(model_id)}

    @app.get("/models")
    def list_models():
        return {
            "models": [
                {"model_id": model_id, "path": service.model_paths[model_id],
                 "targets": list(service.models[model_id].targets),
                 "n_features": len(service.models[model_id].schema)}
                for model_id in sorted(service.models)
            ]
        }

    @app.get("/models/{model_id}/schema")
    def get_schema(model_id: str):
        return service.schema_payload(model_id)

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create_session(body.model_id)
        with session.lock:
            return {
                "session_id": session.session_id,
                "model_id": session.model_id,
                "step": 0,
                "predictions": service.predictions(session),
            }

    @app.post("/sessions/{session_id}/answers")
    def submit_answer(session_id: str, body: SubmitAnswerBody):
        session = service.get_session(session_id)
        with session.lock:
            predictions = service.submit_answer(session, body.feature_id, body.value)
            return {
                "session_id": session_id,
                "step": len(session.answers),
                "feature_id": body.feature_id,
                "predictions": predictions,
            }

    @app.delete("/sessions/{session_id}/answers/{feature_id}")
    def retract_answer(session_id: str, feature_id: str):
        session = service.get_session(session_id)
        with session.lock:
            predictions = service.retract_answer(session, feature_id)
            return {
                "session_id": session_id,
                "step": len(session.answers),
                "predictions": predictions,
            }

    @app.get("/sessions/{session_id}/predictions")
    def get_predictions(session_id: str):
        session = service.get_session(session_id)
        with session.lock:
            return {
                "session_id": session_id,
                "step": len(session.answers),
                "answered": list(session.answers),
                "predictions": service.predictions(session),
            }

    @app.get("/sessions/{session_id}/trajectory")
    def get_trajectory(session_id: str):
        session = service.get_session(session_id)
        with session.lock:
            doc = service.trajectory(session).to_json_dict()
            doc["session_id"] = session_id
            return doc

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
