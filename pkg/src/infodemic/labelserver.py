"""HTTP front end for an active-learning session: serve uncertainty batches,
accept labels, retrain, and report metrics. One writer, optimistic
concurrency via the session revision."""

from __future__ import annotations

import io
import csv
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .active import (
    ActiveSession,
    Label,
    LabelResponse,
    RevisionConflictError,
    SessionCompleteError,
)

API_PREFIX = "/api/v1"


class LabelEntry(BaseModel):
    tweet_id: str
    label: str
    annotator_id: str = "annotator"


class LabelSubmission(BaseModel):
    session_revision: int
    labels: list[LabelEntry] = Field(default_factory=list)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(session: ActiveSession, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="infodemic label server")
    write_lock = threading.Lock()

    @app.exception_handler(RevisionConflictError)
    async def _conflict(request: Request, exc: RevisionConflictError):
        return _error(409, "revision_conflict", str(exc))

    @app.exception_handler(SessionCompleteError)
    async def _complete(request: Request, exc: SessionCompleteError):
        return _error(410, "session_complete", str(exc))

    @app.exception_handler(ValueError)
    async def _bad_request(request: Request, exc: ValueError):
        return _error(422, "invalid_request", str(exc))

    @app.get(API_PREFIX + "/batch")
    def get_batch():
        if session.complete:
            return {
                "status": "complete",
                "cycle": session.cycle,
                "n_cycles": session.config.n_cycles,
                "session_revision": session.revision,
                "items": [],
                "final_metrics": session.metrics_history[-1].as_dict(),
            }
        batch = session.current_batch()
        return {
            "status": "active",
            "cycle": batch.cycle,
            "n_cycles": session.config.n_cycles,
            "session_revision": batch.revision,
            "items": [
                {
                    "tweet_id": item.tweet_id,
                    "text": item.text,
                    "proba": item.proba,
                    "entropy": item.entropy,
                }
                for item in batch.items
            ],
        }

    @app.post(API_PREFIX + "/labels")
    def submit_labels(submission: LabelSubmission):
        responses = []
        malformed: list[tuple[str, str]] = []
        for entry in submission.labels:
            try:
                label = Label(entry.label)
            except ValueError:
                malformed.append((entry.tweet_id, "unknown_label"))
                continue
            responses.append(
                LabelResponse(
                    tweet_id=entry.tweet_id,
                    label=label,
                    annotator_id=entry.annotator_id,
                )
            )
        with write_lock:
            result = session.submit(responses, expected_revision=submission.session_revision)
        return {
            "accepted": result.accepted,
            "rejected": [
                {"tweet_id": t, "code": reason}
                for t, reason in (list(result.rejected) + malformed)
            ],
            "propagated_count": result.propagated_count,
            "cycle": result.cycle,
            "session_revision": result.revision,
            "new_metrics": result.metrics.as_dict(),
        }

    @app.get(API_PREFIX + "/status")
    def get_status():
        return session.status()

    @app.get(API_PREFIX + "/metrics.csv")
    def metrics_csv():
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["cycle", "accuracy", "recall", "precision", "f1"])
        for i, m in enumerate(session.metrics_history):
            writer.writerow(
                [i, f"{m.accuracy:.4f}", f"{m.recall:.4f}", f"{m.precision:.4f}", f"{m.f1:.4f}"]
            )
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(session: ActiveSession, addr: str = "127.0.0.1:8000", static_dir=None) -> None:
    import uvicorn

    host, _, port = addr.rpartition(":")
    uvicorn.run(create_app(session, static_dir), host=host or "127.0.0.1", port=int(port))
