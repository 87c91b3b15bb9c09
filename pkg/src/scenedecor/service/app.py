"""HTTP generation service: background photo + layout document -> decorated image.

One model evaluation runs at a time behind a lock; requests beyond a bounded
queue are rejected with 503. Accepts JSON bodies with base64 images and
multipart uploads on the same endpoint.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError
from starlette.concurrency import run_in_threadpool

from ..errors import LayoutParseError
from ..generator import Generator, default_generator_config
from ..inference import synthesize
from ..layout import SizeStats, parse_layout
from ..training import load_generator_for_inference
from ..vocab import ClassVocabulary
from .schemas import (
    ClassInfo,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    TransformInfo,
)

MAX_UPLOAD_BYTES = 16 * 1024 * 1024


def _error(status: int, message: str, path: str | None = None) -> JSONResponse:
    return JSONResponse({"error": message, "path": path}, status_code=status)


class ModelRunner:
    """Holds the loaded generator and serializes evaluations."""

    def __init__(self, checkpoint_path: str | None, seed: int, queue_limit: int):
        self.checkpoint_path = checkpoint_path
        self.seed = seed
        self.queue_limit = queue_limit
        self.generator: Generator | None = None
        self.vocab = ClassVocabulary()
        self.model_id: str | None = None
        self.started = time.monotonic()
        self._eval_lock = threading.Lock()
        self._queue_lock = threading.Lock()
        self.queue_depth = 0

    @property
    def ready(self) -> bool:
        return self.generator is not None

    def load(self) -> None:
        if self.checkpoint_path is not None:
            gen, meta = load_generator_for_inference(Path(self.checkpoint_path))
            classes = meta.get("classes")
            if classes:
                self.vocab = ClassVocabulary(classes=tuple(classes))
            self.model_id = f"checkpoint:{Path(self.checkpoint_path).name}@{meta['iteration']}"
        else:
            torch.manual_seed(self.seed)
            gen = Generator(default_generator_config(self.vocab.size))
            gen.eval()
            self.model_id = f"random-init:seed{self.seed}"
        self.generator = gen

    def enter_queue(self) -> bool:
        with self._queue_lock:
            if self.queue_depth >= self.queue_limit:
                return False
            self.queue_depth += 1
            return True

    def leave_queue(self) -> None:
        with self._queue_lock:
            self.queue_depth -= 1

    def run(self, background: np.ndarray, objects, mode: str, latent_seed: int | None):
        with self._eval_lock:
            return synthesize(self.generator, background, objects, mode, latent_seed, self.vocab)


def create_app(
    checkpoint_path: str | None = None,
    seed: int = 0,
    queue_limit: int = 8,
    stats_path: str | None = None,
    defer_load: bool = False,
) -> FastAPI:
    runner = ModelRunner(checkpoint_path, seed, queue_limit)
    stats = SizeStats.from_json(Path(stats_path).read_text()) if stats_path else None

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if not defer_load:
            runner.load()
        yield

    app = FastAPI(title="scenedecor generation service", version="1.0", lifespan=lifespan)
    app.state.runner = runner

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            ready=runner.ready,
            model_id=runner.model_id,
            uptime_s=time.monotonic() - runner.started,
            queue_depth=runner.queue_depth,
        )

    @app.get("/v1/classes", response_model=list[ClassInfo])
    def classes():
        return [
            ClassInfo(index=i, name=name, color=runner.vocab.color(i))
            for i, name in enumerate(runner.vocab.classes)
        ]

    @app.get("/v1/spec")
    def spec():
        return app.openapi()

    @app.post("/v1/generate", response_model=GenerateResponse)
    async def generate(request: Request):
        if not runner.ready:
            return _error(503, "model not ready")

        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("background")
            if upload is None:
                return _error(400, "missing background part", path="background")
            raw = await upload.read()
            layout_text = form.get("layout")
            if layout_text is None:
                return _error(400, "missing layout part", path="layout")
            if hasattr(layout_text, "read"):
                layout_text = (await layout_text.read()).decode("utf-8")
            seed_field = form.get("latent_seed")
            latent_seed = int(seed_field) if seed_field not in (None, "") else None
            size_strategy = str(form.get("size_strategy") or "median")
        else:
            body = await request.body()
            if len(body) > MAX_UPLOAD_BYTES:
                return _error(413, f"request exceeds {MAX_UPLOAD_BYTES} bytes")
            try:
                req = GenerateRequest.model_validate_json(body)
            except ValidationError as exc:
                first = exc.errors()[0]
                return _error(400, first["msg"], path=".".join(str(p) for p in first["loc"]))
            try:
                raw = base64.b64decode(req.background, validate=True)
            except (binascii.Error, ValueError):
                return _error(400, "background is not valid base64", path="background")
            import json as _json

            layout_text = _json.dumps(req.layout)
            latent_seed = req.latent_seed
            size_strategy = req.size_strategy

        if len(raw) > MAX_UPLOAD_BYTES:
            return _error(413, f"background exceeds {MAX_UPLOAD_BYTES} bytes")
        try:
            background = np.asarray(Image.open(io.BytesIO(raw)).convert("RGB"))
        except (UnidentifiedImageError, OSError):
            return _error(400, "background is not a decodable image", path="background")

        try:
            objects, mode, width, height = parse_layout(
                layout_text,
                vocab=runner.vocab,
                stats=stats,
                size_strategy=size_strategy if size_strategy != "gt" else "median",
            )
        except LayoutParseError as exc:
            return _error(400, str(exc), path=exc.path or "layout")

        if (width, height) != (background.shape[1], background.shape[0]):
            return _error(
                400,
                f"layout canvas {width}x{height} does not match background "
                f"{background.shape[1]}x{background.shape[0]}",
                path="layout.canvas",
            )

        if not runner.enter_queue():
            return _error(503, "generation queue full")
        start = time.perf_counter()
        try:
            image, transform = await run_in_threadpool(runner.run, background, objects, mode, latent_seed)
        finally:
            runner.leave_queue()
        latency_ms = (time.perf_counter() - start) * 1000

        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="PNG")
        return GenerateResponse(
            image=base64.b64encode(buf.getvalue()).decode("ascii"),
            latency_ms=latency_ms,
            model_id=runner.model_id,
            request_id=uuid.uuid4().hex,
            transform=TransformInfo(**transform.to_json()),
        )

    return app
