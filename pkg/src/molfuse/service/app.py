"""HTTP service exposing the pipeline.

Quick operations (parse, fingerprint, evaluate) answer inline; dataset and
artifact paths are exchanged through the shared filesystem. Training
endpoints run synchronously, which is the intended desk scale; put the
service behind a job queue if runs grow beyond that.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..chem import SmilesError
from ..config import ConfigError
from . import ops
from . import schemas as sm


def create_app() -> FastAPI:
    app = FastAPI(title="molfuse", version="0.1.0")

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        kind = type(exc).__name__
        status = 400
        payload = {"error": kind, "detail": str(exc)}
        if isinstance(exc, SmilesError):
            payload["offset"] = exc.offset
        return JSONResponse(status_code=status, content=payload)

    @app.exception_handler(FileNotFoundError)
    async def missing_file_handler(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400,
                            content={"error": "FileNotFoundError", "detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/parse", response_model=sm.ParseResponse)
    def parse(req: sm.ParseRequest):
        return ops.parse_op(req)

    @app.post("/fingerprint", response_model=sm.FingerprintResponse)
    def fingerprint(req: sm.FingerprintRequest):
        return ops.fingerprint_op(req)

    @app.post("/similarity", response_model=sm.SimilarityResponse)
    def similarity(req: sm.SimilarityRequest):
        return ops.similarity_op(req)

    @app.post("/pretrain", response_model=sm.PretrainResponse)
    def pretrain(req: sm.PretrainRequest):
        return ops.pretrain_op(req)

    @app.post("/finetune", response_model=sm.FinetuneResponse)
    def finetune(req: sm.FinetuneRequest):
        return ops.finetune_op(req)

    @app.post("/evaluate", response_model=sm.EvaluateResponse)
    def evaluate(req: sm.EvaluateRequest):
        return ops.evaluate_op(req)

    @app.post("/sensitivity", response_model=sm.SensitivityResponse)
    def sensitivity(req: sm.SensitivityRequest):
        return ops.sensitivity_op(req)

    @app.post("/fuse-report", response_model=sm.FuseReportResponse)
    def fuse_report(req: sm.FuseReportRequest):
        return ops.fuse_report_op(req)

    return app
