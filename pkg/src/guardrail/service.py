"""HTTP front end: one JSON endpoint for the full pipeline and one per stage."""

from __future__ import annotations

import logging
import socket
import time
from typing import Any, Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from guardrail.customizer import run_chain
from guardrail.detector import check_input, detect_hallucination
from guardrail.errors import (
    BackendFailure,
    BackendUnavailable,
    BindError,
    ClientFailure,
    GuardrailError,
    StageFailure,
    WrapperFailure,
)
from guardrail.grounding import ground_query
from guardrail.pipeline import GuardrailPipeline, PipelineTrace, StageRecord
from guardrail.policy import PipelinePolicy, Query
from guardrail.repairer import RepairRequest, repair

log = logging.getLogger(__name__)


class ChatRequest(BaseModel):
    text: str
    metadata: dict[str, Any] = Field(default_factory=dict)


class TextRequest(BaseModel):
    text: str


class HallucinationRequest(BaseModel):
    question: str
    context: str = ""
    answer: str


class GroundRequest(BaseModel):
    text: str
    k: Optional[int] = Field(default=None, ge=1)


class RepairBody(BaseModel):
    question: str
    context: str = ""
    answer: str
    reason: str


class StageRecordModel(BaseModel):
    stage_name: str
    verdict_summary: str
    elapsed_micros: int
    artifacts: dict[str, Any]


class ChatResponse(BaseModel):
    final_text: str
    status: Literal["answered", "rejected", "repaired", "flagged"]
    trace: Optional[list[StageRecordModel]] = None


class InputVerdictResponse(BaseModel):
    label: Literal["safe", "unsafe"]
    score: float
    trace: Optional[list[StageRecordModel]] = None


class HallucinationResponse(BaseModel):
    p_halu: Optional[float]
    is_hallucinated: bool
    reason: str
    indeterminate: bool
    trace: Optional[list[StageRecordModel]] = None


class RetrievedRecord(BaseModel):
    id: str
    text: str
    key_text: Optional[str] = None


class RetrievalModel(BaseModel):
    record: RetrievedRecord
    similarity: float


class GroundResponse(BaseModel):
    query_text: str
    prompt: str
    contexts: list[RetrievalModel]
    trace: Optional[list[StageRecordModel]] = None


class RepairResponse(BaseModel):
    corrected_answer: str
    repaired: bool
    trace: Optional[list[StageRecordModel]] = None


class AnnotationModel(BaseModel):
    wrapper_name: str
    payload: Any


class CustomizeResponse(BaseModel):
    text: str
    modified: bool
    annotations: list[AnnotationModel]
    trace: Optional[list[StageRecordModel]] = None


RESPONSE_MODELS = {
    "/v1/chat": ChatResponse,
    "/v1/detect/input": InputVerdictResponse,
    "/v1/detect/hallucination": HallucinationResponse,
    "/v1/ground": GroundResponse,
    "/v1/repair": RepairResponse,
    "/v1/customize": CustomizeResponse,
}


def _error(status: int, exc: Exception, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": type(exc).__name__, "detail": str(exc), **extra})


def create_app(pipeline: GuardrailPipeline, policy: Optional[PipelinePolicy] = None) -> FastAPI:
    policy = policy or PipelinePolicy()
    app = FastAPI(title="guardrail", version="0.1.0")
    app.state.pipeline = pipeline
    app.state.policy = policy

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "BadRequest", "detail": exc.errors()})

    @app.exception_handler(GuardrailError)
    async def _guardrail_error(request: Request, exc: GuardrailError):
        if isinstance(exc, BackendUnavailable):
            return _error(503, exc)
        if isinstance(exc, StageFailure):
            return _error(502, exc, stage=exc.stage)
        if isinstance(exc, (BackendFailure, WrapperFailure, ClientFailure)):
            return _error(502, exc)
        return _error(400, exc)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return _error(400, exc)

    def single_stage(request: Request, stage: str, body):
        """Run one stage body, returning its payload plus a one-record trace."""
        start = pipeline.clock()
        payload, summary = body()
        record = StageRecord(stage, summary, int((pipeline.clock() - start) // 1000), {})
        if request.query_params.get("trace", "true").lower() != "false":
            payload["trace"] = PipelineTrace((record,)).to_list()
        return payload

    @app.post("/v1/chat", response_model=ChatResponse)
    def chat(body: ChatRequest, request: Request):
        resp = pipeline.run_pipeline(Query(body.text, body.metadata), policy)
        return resp.to_dict(include_trace=request.query_params.get("trace", "true").lower() != "false")

    @app.post("/v1/detect/input", response_model=InputVerdictResponse)
    def detect_input(body: TextRequest, request: Request):
        def run():
            v = check_input(Query(body.text), pipeline.backend("moderation"), policy.input_unsafe_threshold)
            return v.to_dict(), v.label

        return single_stage(request, "input_safety", run)

    @app.post("/v1/detect/hallucination", response_model=HallucinationResponse)
    def detect_halu(body: HallucinationRequest, request: Request):
        def run():
            a = detect_hallucination(
                body.question, body.context, body.answer, policy,
                pipeline.backend("generation"), pipeline.token_sets,
            )
            return a.to_dict(), "hallucinated" if a.is_hallucinated else "not hallucinated"

        return single_stage(request, "hallucination_detection", run)

    @app.post("/v1/ground", response_model=GroundResponse)
    def ground(body: GroundRequest, request: Request):
        index = pipeline.index
        if index is None:
            raise BackendUnavailable("embedding", "no knowledge index is loaded")

        def run():
            g = ground_query(Query(body.text), index, body.k or policy.top_k_contexts)
            return g.to_dict(), f"retrieved {len(g.contexts)} context(s)"

        return single_stage(request, "grounding", run)

    @app.post("/v1/repair", response_model=RepairResponse)
    def repair_answer(body: RepairBody, request: Request):
        def run():
            req = RepairRequest(body.question, body.context, body.answer, body.reason)
            r = repair(req, pipeline.backend("fixing"))
            return r.to_dict(), "repaired" if r.repaired else "not repaired"

        return single_stage(request, "repairer", run)

    @app.post("/v1/customize", response_model=CustomizeResponse)
    def customize(body: TextRequest, request: Request):
        def run():
            out = run_chain(body.text, pipeline.wrappers)
            return out.to_dict(), "modified" if out.modified else "unchanged"

        return single_stage(request, "customizer", run)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "index_loaded": pipeline.index is not None}

    return app


def check_bind(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            s.bind((host, port))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc


def serve(config, graceful_timeout: float = 30.0) -> None:
    """Run the service until interrupted; in-flight requests finish on shutdown."""
    import uvicorn

    from guardrail.config import build_pipeline

    pipeline = build_pipeline(config)
    app = create_app(pipeline, config.policy)
    check_bind(config.host, config.port)
    log.info("serving on %s:%d", config.host, config.port)
    started = time.monotonic()
    uvicorn.run(app, host=config.host, port=config.port, timeout_graceful_shutdown=graceful_timeout)
    log.info("stopped after %.1fs", time.monotonic() - started)
