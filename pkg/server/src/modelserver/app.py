"""FastAPI application exposing the /v1 wire protocol."""

from __future__ import annotations

import hashlib
import json
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from modelserver import __version__
from modelserver.config import ServerConfig
from modelserver.editor import EditorRuntime, load_editor
from modelserver.predictor import PredictorRuntime, load_predictor
from modelserver.scorer import ScorerRuntime, load_scorer


class PredictRequest(BaseModel):
    texts: list[str]


class AttributeRequest(BaseModel):
    tokens: list[str]
    target_label: str


class InfillRequest(BaseModel):
    masked: str
    target_label: str | None = None
    num_return: int = Field(ge=1)
    top_k: int = Field(ge=1)
    top_p: float = Field(gt=0.0, le=1.0)


class PllRequest(BaseModel):
    text: str


class _InferenceGate:
    """Bounded in-flight counter plus a lock serializing model access."""

    def __init__(self, capacity: int):
        self._slots = threading.Semaphore(capacity)
        self._lock = threading.Lock()

    def __enter__(self):
        if not self._slots.acquire(blocking=False):
            raise _Busy()
        self._lock.acquire()
        return self

    def __exit__(self, *exc):
        self._lock.release()
        self._slots.release()
        return False


class _Busy(Exception):
    pass


def _request_seed(payload: InfillRequest) -> int:
    blob = json.dumps([payload.masked, payload.target_label, payload.num_return,
                       payload.top_k, repr(float(payload.top_p)), 0], sort_keys=True)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big")


def build_app(cfg: ServerConfig, predictor: PredictorRuntime | None = None,
              editor: EditorRuntime | None = None,
              scorer: ScorerRuntime | None = None) -> FastAPI:
    predictor = predictor or load_predictor(cfg.predictor_ckpt, cfg.max_seq_len,
                                            cfg.device)
    editor = editor or load_editor(cfg.editor_ckpt, cfg.max_seq_len, cfg.device)
    if scorer is None and cfg.scorer_ckpt:
        scorer = load_scorer(cfg.scorer_ckpt, cfg.max_seq_len, cfg.device)

    app = FastAPI(title="edit-model-server", version=__version__)
    gate = _InferenceGate(max(1, cfg.queue_size))
    app.state.gate = gate

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.exception_handler(_Busy)
    async def busy(request: Request, exc: _Busy):
        return JSONResponse(status_code=503, content={"error": "inference queue full"})

    @app.get("/v1/meta")
    def meta():
        return {"labels": predictor.labels, "name": "edit-model-server",
                "version": __version__}

    @app.post("/v1/predict")
    def predict(body: PredictRequest):
        with gate:
            labels, probs = [], []
            for text in body.texts:
                if not text.split():
                    return JSONResponse(status_code=400,
                                        content={"error": "empty text"})
                vec = predictor.predict_proba(text)
                labels.append(predictor.labels[int(np.argmax(vec))])
                probs.append([float(x) for x in vec])
        return {"labels": labels, "probs": probs}

    @app.post("/v1/attribute")
    def attribute(body: AttributeRequest):
        if body.target_label not in predictor.labels:
            return JSONResponse(status_code=422,
                                content={"error": f"unknown label {body.target_label!r}"})
        if not body.tokens:
            return JSONResponse(status_code=400, content={"error": "no tokens"})
        with gate:
            scores = predictor.attribute_words(body.tokens, body.target_label,
                                               cfg.aggregation)
        return {"scores": [float(x) for x in scores]}

    @app.post("/v1/infill")
    def infill(body: InfillRequest):
        if not body.masked.split():
            return JSONResponse(status_code=400, content={"error": "empty masked text"})
        with gate:
            raws = editor.generate(body.masked, body.target_label, body.num_return,
                                   body.top_k, body.top_p, _request_seed(body))
        return {"candidates": [{"raw": r} for r in raws]}

    @app.post("/v1/pll")
    def pll(body: PllRequest):
        if scorer is None:
            return JSONResponse(status_code=400,
                                content={"error": "no scorer checkpoint configured"})
        if not body.text.split():
            return JSONResponse(status_code=400, content={"error": "empty text"})
        with gate:
            loss = scorer.pseudo_loss(body.text)
        return {"loss": loss}

    return app
