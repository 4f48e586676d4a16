"""JSON-over-HTTP API for the review workflow.

Thin layer over the Workspace: uploads, paged session listings, event
timelines, human decisions, asynchronous labeling jobs with polling, CSV
export, and per-dataset stats. Session references on the wire are
"{dataset_id}~{session_id}" so one path segment identifies both. Every
error is a JSON body {code, message}; there are no HTML error pages.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from starlette.datastructures import UploadFile
from starlette.exceptions import HTTPException as StarletteHTTPException

from forager.errors import (
    BackendUnavailable,
    DatasetBusy,
    EmptySession,
    ForagerError,
    MalformedInput,
    PartialFailure,
    UnknownDataset,
    UnlabeledEvents,
)
from forager.agents import (
    AgentConfig,
    HttpBackend,
    HttpBackendConfig,
    MockBackend,
    MockPolicy,
    annotate_corpus,
    heuristic_fallback_annotations,
)
from forager.heuristics import LabelerConfig, label_session
from forager.ingest import ColumnMapping, SegmentationPolicy
from forager.model import CognitiveLabel
from forager.store import Workspace

PAGE_SIZE = 50
SESSION_REF_SEPARATOR = "~"


class ApiError(Exception):
    """An error with a fixed HTTP status and machine-readable code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message})


class JobManager:
    """In-process registry of asynchronous labeling jobs."""

    def __init__(self) -> None:
        self._jobs: dict[str, dict[str, Any]] = {}
        self._mutex = threading.Lock()

    def create(self, total: int) -> str:
        job_id = uuid.uuid4().hex[:12]
        with self._mutex:
            self._jobs[job_id] = {
                "state": "queued", "done": 0, "total": total, "error": None}
        return job_id

    def update(self, job_id: str, **fields: Any) -> None:
        with self._mutex:
            self._jobs[job_id].update(fields)

    def get(self, job_id: str) -> Optional[dict[str, Any]]:
        with self._mutex:
            job = self._jobs.get(job_id)
            return None if job is None else dict(job)


def _split_ref(ref: str) -> tuple[str, str]:
    if SESSION_REF_SEPARATOR not in ref:
        raise ApiError(404, "unknown_session",
                       f"session reference {ref!r} is not dataset~session")
    dataset_id, session_id = ref.split(SESSION_REF_SEPARATOR, 1)
    return dataset_id, session_id


def _session_summary(ws: Workspace, dataset_id: str, session) -> dict[str, Any]:
    labeled = flagged = decided = 0
    first_query = ""
    for event in session.events:
        if not first_query and event.action.kind == "QUERY":
            first_query = event.content
        eff = ws.effective_for(dataset_id, session.id, event.index)
        if eff is not None:
            labeled += 1
            if eff.flagged:
                flagged += 1
        if ws.decision_for(dataset_id, session.id, event.index) is not None:
            decided += 1
    return {
        "ref": f"{dataset_id}{SESSION_REF_SEPARATOR}{session.id}",
        "session_id": session.id,
        "user_id": session.user_id,
        "n_events": len(session.events),
        "first_timestamp": session.events[0].timestamp if session.events else None,
        "first_query": first_query,
        "labeled_events": labeled,
        "flagged_open": flagged,
        "decided": decided,
    }


def _parse_backend_spec(spec: Optional[dict]) -> Any:
    spec = spec or {}
    kind = spec.get("kind", "mock")
    if kind == "mock":
        policy = MockPolicy.from_record(spec.get("policy", {}))
        return MockBackend(policy=policy)
    if kind == "http":
        endpoint = spec.get("endpoint")
        if not endpoint:
            raise ApiError(400, "invalid_request",
                           "http backend requires an endpoint")
        return HttpBackend(HttpBackendConfig(
            endpoint=endpoint,
            analyst_model=spec.get("analyst_model", "claude-3-5-sonnet"),
            critic_model=spec.get("critic_model", "gpt-4o"),
            judge_model=spec.get("judge_model", "gpt-4o"),
        ))
    raise ApiError(400, "invalid_request", f"unknown backend kind {kind!r}")


def _run_label_job(ws: Workspace, jobs: JobManager, job_id: str,
                   dataset_id: str, body: dict) -> None:
    try:
        sessions = ws.sessions_for(dataset_id)
        engine = body.get("engine", "heuristic")
        jobs.update(job_id, state="running")
        if engine == "heuristic":
            cfg = None
            if body.get("labeler"):
                cfg = LabelerConfig.from_record(body["labeler"])
            annotations = []
            for i, session in enumerate(sessions, start=1):
                annotations.extend(label_session(session, cfg))
                jobs.update(job_id, done=i)
            ws.add_annotations(dataset_id, annotations)
        else:
            backend = _parse_backend_spec(body.get("backend"))
            cfg = AgentConfig(
                flag_rate=float(body.get("flag_rate", 0.01)),
                max_workers=int(body.get("max_concurrency", 4)))
            result = annotate_corpus(
                sessions, backend, cfg=cfg,
                on_session_done=lambda done: jobs.update(job_id, done=done))
            annotations = list(result.annotations)
            annotations.extend(
                heuristic_fallback_annotations(sessions, result.escalated))
            ws.add_annotations(dataset_id, annotations, result.transcripts)
        jobs.update(job_id, state="done", done=len(sessions))
    except (ForagerError, ValueError) as exc:
        jobs.update(job_id, state="failed", error=str(exc))
    except Exception as exc:  # surface anything unexpected to the poller
        jobs.update(job_id, state="failed", error=f"internal error: {exc}")
    finally:
        ws.release_job(dataset_id)


def create_app(workspace: Workspace | str | Path,
               frontend_dir: Optional[Path] = None) -> FastAPI:
    ws = workspace if isinstance(workspace, Workspace) else Workspace(workspace)
    jobs = JobManager()
    app = FastAPI(title="forager", docs_url=None, redoc_url=None)
    app.state.workspace = ws

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, exc: ApiError) -> JSONResponse:
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_error(_: Request, exc: StarletteHTTPException) -> JSONResponse:
        return _error_response(exc.status_code, "http_error", str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_: Request, exc: RequestValidationError) -> JSONResponse:
        return _error_response(400, "invalid_request", str(exc.errors()[:3]))

    @app.exception_handler(Exception)
    async def handle_unexpected(_: Request, exc: Exception) -> JSONResponse:
        return _error_response(500, "internal_error", str(exc))

    def _dataset_or_404(dataset_id: str) -> None:
        try:
            ws.progress(dataset_id)
        except UnknownDataset as exc:
            raise ApiError(404, "unknown_dataset", str(exc)) from None

    @app.post("/api/datasets")
    async def upload_dataset(request: Request) -> JSONResponse:
        form = await request.form()
        upload = form.get("file")
        if not isinstance(upload, UploadFile):
            raise ApiError(400, "invalid_request", "multipart field 'file' is required")
        mapping_raw = form.get("mapping")
        if not mapping_raw:
            raise ApiError(400, "invalid_request", "multipart field 'mapping' is required")
        if isinstance(mapping_raw, UploadFile):
            mapping_raw = (await mapping_raw.read()).decode("utf-8")
        fmt = str(form.get("format") or "").strip().lower()
        if not fmt:
            name = (upload.filename or "").lower()
            fmt = "json" if name.endswith(".json") else "csv"
        policy_raw = form.get("policy")
        policy_rec = json.loads(policy_raw) if policy_raw else {}
        data = await upload.read()
        try:
            mapping = ColumnMapping.from_json(str(mapping_raw))
            policy = SegmentationPolicy(
                mode=policy_rec.get("mode", "by_inactivity"),
                gap_ms=int(policy_rec.get("gap_ms", SegmentationPolicy().gap_ms)))
            dataset_id, result = ws.ingest_dataset(
                data, fmt, mapping, policy,
                name=str(form.get("name") or upload.filename or "dataset"))
        except MalformedInput as exc:
            raise ApiError(400, "malformed_input", str(exc)) from None
        except ValueError as exc:
            raise ApiError(400, "invalid_request", str(exc)) from None
        return JSONResponse({
            "dataset_id": dataset_id,
            "rejected_rows": result.rejected_total,
            "rejects": [
                {"row": r.row, "reason": r.reason} for r in result.rejects[:25]],
        })

    @app.get("/api/datasets")
    def list_datasets() -> dict:
        return {"datasets": ws.list_datasets()}

    @app.get("/api/datasets/{dataset_id}/sessions")
    def list_sessions(dataset_id: str, filter: str = "all", page: int = 1) -> dict:
        _dataset_or_404(dataset_id)
        if filter not in ("all", "flagged", "undecided"):
            raise ApiError(400, "invalid_request", f"unknown filter {filter!r}")
        if page < 1:
            raise ApiError(400, "invalid_request", "page starts at 1")
        summaries = [
            _session_summary(ws, dataset_id, s)
            for s in ws.sessions_for(dataset_id)
        ]
        if filter == "flagged":
            flagged_ever = set()
            for ann in ws.annotations_for(dataset_id):
                if ann.flagged:
                    flagged_ever.add(ann.session_id)
            summaries = [s for s in summaries if s["session_id"] in flagged_ever]
        elif filter == "undecided":
            summaries = [s for s in summaries if s["flagged_open"] > 0]
        total = len(summaries)
        pages = max(1, -(-total // PAGE_SIZE))
        start = (page - 1) * PAGE_SIZE
        return {
            "sessions": summaries[start:start + PAGE_SIZE],
            "page": page,
            "pages": pages,
            "total": total,
            "page_size": PAGE_SIZE,
        }

    @app.get("/api/sessions/{ref}")
    def get_session(ref: str) -> dict:
        dataset_id, session_id = _split_ref(ref)
        _dataset_or_404(dataset_id)
        try:
            session = ws.get_session(dataset_id, session_id)
        except UnknownDataset as exc:
            raise ApiError(404, "unknown_session", str(exc)) from None
        events = []
        for event in session.events:
            eff = ws.effective_for(dataset_id, session_id, event.index)
            decision = ws.decision_for(dataset_id, session_id, event.index)
            transcript = ws.transcript_for(dataset_id, session_id, event.index)
            events.append({
                **event.to_record(),
                "label": None if eff is None else eff.label.serialize(),
                "source": None if eff is None else eff.source,
                "confidence": None if eff is None else eff.confidence,
                "flagged": False if eff is None else eff.flagged,
                "justification": None if eff is None else eff.justification,
                "decision": None if decision is None else decision.to_record(),
                "transcript": None if transcript is None else transcript.to_record(),
            })
        return {
            "ref": ref,
            "dataset_id": dataset_id,
            "session_id": session_id,
            "user_id": session.user_id,
            "events": events,
        }

    @app.post("/api/sessions/{ref}/events/{event_index}/decision")
    async def post_decision(ref: str, event_index: int, request: Request) -> dict:
        dataset_id, session_id = _split_ref(ref)
        _dataset_or_404(dataset_id)
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise ApiError(400, "invalid_request", "body must be JSON") from None
        if not isinstance(body, dict) or "label" not in body or "verdict" not in body:
            raise ApiError(400, "invalid_request",
                           "body requires 'label' and 'verdict'")
        try:
            label = CognitiveLabel.parse(str(body["label"]))
        except ValueError as exc:
            raise ApiError(400, "invalid_label", str(exc)) from None
        try:
            decision = ws.record_decision(
                dataset_id, session_id, event_index, label,
                verdict=str(body["verdict"]), note=str(body.get("note", "")))
        except KeyError as exc:
            raise ApiError(409, "unknown_event", str(exc.args[0])) from None
        except UnknownDataset as exc:
            raise ApiError(404, "unknown_session", str(exc)) from None
        except ValueError as exc:
            raise ApiError(400, "invalid_request", str(exc)) from None
        return {"decision": decision.to_record()}

    @app.post("/api/datasets/{dataset_id}/label")
    async def start_label_job(dataset_id: str, request: Request) -> dict:
        _dataset_or_404(dataset_id)
        try:
            body = await request.json()
        except json.JSONDecodeError:
            body = {}
        if not isinstance(body, dict):
            raise ApiError(400, "invalid_request", "body must be a JSON object")
        engine = body.get("engine", "heuristic")
        if engine not in ("heuristic", "agents"):
            raise ApiError(400, "invalid_request", f"unknown engine {engine!r}")
        try:
            ws.claim_job(dataset_id)
        except DatasetBusy as exc:
            raise ApiError(409, "dataset_busy", str(exc)) from None
        total = len(ws.sessions_for(dataset_id))
        job_id = jobs.create(total)
        worker = threading.Thread(
            target=_run_label_job, args=(ws, jobs, job_id, dataset_id, body),
            daemon=True)
        worker.start()
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"unknown job: {job_id}")
        return job

    @app.get("/api/datasets/{dataset_id}/export")
    def export_dataset(dataset_id: str, extended: bool = False,
                       force: bool = False) -> Response:
        _dataset_or_404(dataset_id)
        try:
            payload = ws.export_csv(dataset_id, extended=extended, force=force)
        except UnlabeledEvents as exc:
            raise ApiError(409, "unlabeled_events", str(exc)) from None
        return Response(
            content=payload,
            media_type="text/csv; charset=utf-8",
            headers={"Content-Disposition":
                     f'attachment; filename="{dataset_id}.csv"'})

    @app.get("/api/datasets/{dataset_id}/stats")
    def dataset_stats(dataset_id: str) -> dict:
        _dataset_or_404(dataset_id)
        return ws.stats(dataset_id)

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.is_dir() else None
    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="ui")
    return app


def serve_api(workspace: Workspace | str | Path, port: int,
              host: str = "127.0.0.1") -> None:
    """Blocking entry point used by the command line."""
    import uvicorn

    uvicorn.run(create_app(workspace), host=host, port=port, log_level="warning")
