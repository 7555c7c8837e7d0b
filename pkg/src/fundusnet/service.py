"""HTTP diagnosis service: upload a fundus image, get a screening result.

Endpoints:
    GET  /healthz   liveness probe
    GET  /metadata  model version, input shape, threshold, parameter count
    POST /predict   multipart field ``image`` -> PredictionResponse JSON
    GET  /          static single-page UI (when a bundle is available)

The loaded weights are immutable shared state; every request is stateless
and side-effect free, so concurrent requests are safe. Error bodies are
always ``{"error": <code>, "detail": <text>}`` with codes from a fixed
enum.
"""

from __future__ import annotations

import importlib.resources
import os
import time
from dataclasses import dataclass
from enum import Enum

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import network
from .data import decode_and_resize
from .errors import ImageDecodeError

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
REQUEST_TIMEOUT_S = 30  # enforced by the server runner (uvicorn keep-alive)


class ErrorCode(str, Enum):
    MISSING_IMAGE = "missing_image"
    PAYLOAD_TOO_LARGE = "payload_too_large"
    DECODE_ERROR = "decode_error"
    INTERNAL_ERROR = "internal_error"


@dataclass(frozen=True)
class PredictionResponse:
    label: str
    score: float
    threshold: float
    model_version: str
    latency_ms: float

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "score": self.score,
            "threshold": self.threshold,
            "model_version": self.model_version,
            "latency_ms": self.latency_ms,
        }


def _error(status: int, code: ErrorCode, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code.value, "detail": detail})


_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>fundusnet</title></head>
<body><h1>fundusnet diagnosis service</h1>
<p>The service is running. The browser UI bundle is not installed;
POST a multipart image to <code>/predict</code> instead.</p>
</body></html>
"""


def default_ui_dir():
    """The packaged static bundle, when the frontend build has been installed."""
    try:
        candidate = importlib.resources.files("fundusnet") / "static"
        path = str(candidate)
        if os.path.isdir(path) and os.path.exists(os.path.join(path, "index.html")):
            return path
    except Exception:
        pass
    return None


def create_app(weights: network.ModelWeights,
               threshold: float = network.DEFAULT_THRESHOLD,
               model_version: str = "unversioned",
               ui_dir=None,
               max_upload_bytes: int = MAX_UPLOAD_BYTES) -> FastAPI:
    """Build the application around one immutable set of weights."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    app = FastAPI(title="fundusnet", docs_url=None, redoc_url=None)

    @app.exception_handler(Exception)
    async def on_internal_error(request: Request, exc: Exception) -> JSONResponse:
        return _error(500, ErrorCode.INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "model_version": model_version}

    @app.get("/metadata")
    def metadata() -> dict:
        return {
            "model_version": model_version,
            "input_shape": list(weights.config.input_shape),
            "threshold": threshold,
            "parameter_count": weights.param_count(),
        }

    @app.post("/predict")
    async def predict_endpoint(image: UploadFile | None = File(default=None)):
        started = time.perf_counter()
        if image is None:
            return _error(400, ErrorCode.MISSING_IMAGE,
                          "multipart/form-data field 'image' is required")
        data = await image.read()
        if len(data) > max_upload_bytes:
            return _error(413, ErrorCode.PAYLOAD_TOO_LARGE,
                          f"upload exceeds {max_upload_bytes} bytes")
        try:
            pixels = decode_and_resize(data)
        except ImageDecodeError as exc:
            return _error(400, ErrorCode.DECODE_ERROR, str(exc))
        diagnosis = network.predict(weights, pixels, threshold)
        response = PredictionResponse(
            label=diagnosis.label,
            score=diagnosis.score,
            threshold=diagnosis.threshold,
            model_version=model_version,
            latency_ms=(time.perf_counter() - started) * 1000.0,
        )
        return JSONResponse(response.to_json_dict())

    if ui_dir is None:
        ui_dir = default_ui_dir()
    if ui_dir is not None and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return _FALLBACK_PAGE

    return app
