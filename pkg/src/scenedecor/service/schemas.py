"""Request/response models for the generation service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class GenerateRequest(BaseModel):
    background: str = Field(description="PNG or JPEG bytes, base64-encoded")
    layout: dict[str, Any] = Field(description="Layout document (shared JSON schema)")
    latent_seed: int | None = None
    size_strategy: Literal["gt", "median", "mean"] = "median"


class TransformInfo(BaseModel):
    scale: float
    offset_x: int
    offset_y: int
    canvas_size: int


class GenerateResponse(BaseModel):
    image: str = Field(description="256x256 PNG, base64-encoded")
    latency_ms: float
    model_id: str
    request_id: str
    transform: TransformInfo


class ClassInfo(BaseModel):
    index: int
    name: str
    color: str


class HealthResponse(BaseModel):
    ready: bool
    model_id: str | None
    uptime_s: float
    queue_depth: int


class ErrorBody(BaseModel):
    error: str
    path: str | None = None
