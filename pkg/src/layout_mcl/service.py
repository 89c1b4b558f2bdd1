"""HTTP generation service over an immutable checkpoint snapshot.

Every request carries its own seed, so the server holds no generator state:
identical requests produce identical responses, and concurrent requests only
ever read the snapshot. Swapping in a new checkpoint rebinds one reference,
so in-flight requests keep the snapshot they started with.

Wire format: categories travel as name strings and are resolved against the
checkpoint vocabulary; unknown names or malformed geometry come back as a
400 with the offending field's location.
"""

import json
import math
from dataclasses import dataclass
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .data import LayoutObject, layout_to_json
from .generator import GenerationRequest, GeneratorError, SoftConstraint, generate
from .model import LayoutModel, checkpoint_hash
from .render import layout_svg

MAX_COUNT = 64  # caps per-request work so one request cannot starve the rest
BOUNDS_SLACK = 1e-9


@dataclass(frozen=True)
class Snapshot:
    model: LayoutModel
    checkpoint: str  # sha256 of the params file the model was loaded from


def load_snapshot(checkpoint_dir):
    model, _ = LayoutModel.load(checkpoint_dir)
    return Snapshot(model=model, checkpoint=checkpoint_hash(checkpoint_dir))


class ServiceState:
    """A read-only model snapshot plus a served-request counter."""

    def __init__(self, snapshot):
        self.snapshot = snapshot
        self.requests_served = 0

    def swap(self, snapshot):
        # single attribute rebind; requests read the reference once
        self.snapshot = snapshot


class WireObject(BaseModel):
    model_config = ConfigDict(extra="forbid")
    category: str
    bbox: list[float] = Field(min_length=4, max_length=4)


class WireSoftConstraint(BaseModel):
    model_config = ConfigDict(extra="forbid")
    category: str
    size: list[float] | None = None

    @field_validator("size")
    @classmethod
    def _size_is_a_pair(cls, value):
        if value is not None and len(value) != 2:
            raise ValueError("size must be [width, height]")
        return value


class GenerateBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    hard: list[WireObject] = Field(default_factory=list)
    soft: list[WireSoftConstraint] = Field(default_factory=list)
    count: int = Field(default=1, ge=1, le=MAX_COUNT)
    seed: int = 0
    format: Literal["json", "svg"] = "json"
    max_objects: int = Field(default=10, ge=1)
    temperature: float = Field(default=1.0, gt=0.0)


def _reject(loc, msg):
    # mirrors the validation-error shape pydantic uses for schema failures
    return HTTPException(status_code=400, detail=[{"loc": list(loc), "msg": msg}])


def _category_index(name, vocabulary, loc):
    if name not in vocabulary.names:
        raise _reject(loc, f"unknown category {name!r}")
    return vocabulary.index(name)


def _checked_bbox(bbox, loc):
    x, y, w, h = (float(v) for v in bbox)
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise _reject(loc, "bbox values must be finite")
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise _reject(loc, "bbox origin must lie in the unit square")
    if w <= 0.0 or h <= 0.0:
        raise _reject(loc, "bbox width and height must be positive")
    if x + w > 1.0 + BOUNDS_SLACK or y + h > 1.0 + BOUNDS_SLACK:
        raise _reject(loc, "bbox must not overflow the unit square")
    return (x, y, w, h)


def request_from_body(body, vocabulary):
    """Resolve wire names to indices and build a validated generation request."""
    hard = []
    for i, obj in enumerate(body.hard):
        loc = ("body", "hard", i)
        hard.append(
            LayoutObject(
                category=_category_index(obj.category, vocabulary, loc + ("category",)),
                bbox=_checked_bbox(obj.bbox, loc + ("bbox",)),
            )
        )
    soft = []
    for i, constraint in enumerate(body.soft):
        loc = ("body", "soft", i)
        size = tuple(float(v) for v in constraint.size) if constraint.size is not None else None
        soft.append(
            SoftConstraint(
                category=_category_index(constraint.category, vocabulary, loc + ("category",)),
                size=size,
            )
        )
    try:
        return GenerationRequest(
            hard=tuple(hard),
            soft=tuple(soft),
            count=body.count,
            max_objects=body.max_objects,
            seed=body.seed,
            temperature=body.temperature,
        )
    except GeneratorError as err:
        raise _reject(("body",), str(err)) from None


def create_app(state):
    app = FastAPI(title="layout-mcl service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/categories")
    def categories():
        return {"categories": list(state.snapshot.model.vocabulary.names)}

    @app.post("/api/generate")
    def generate_candidates(body: GenerateBody):
        snapshot = state.snapshot  # read once so a swap cannot split a request
        vocabulary = snapshot.model.vocabulary
        request = request_from_body(body, vocabulary)
        candidates = []
        for layout in generate(request, snapshot.model):
            entry = {"layout": json.loads(layout_to_json(layout, vocabulary))}
            if body.format == "svg":
                entry["svg"] = layout_svg(layout, vocabulary)
            candidates.append(entry)
        state.requests_served += 1
        return {"candidates": candidates}

    @app.get("/api/health")
    def health():
        return {"status": "ok", "checkpoint": state.snapshot.checkpoint}

    return app


def serve(checkpoint_dir, host="127.0.0.1", port=8000):
    """Blocking entry point: load the snapshot and run the HTTP server."""
    import uvicorn

    state = ServiceState(load_snapshot(checkpoint_dir))
    uvicorn.run(create_app(state), host=host, port=port)
