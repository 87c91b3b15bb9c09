"""Object layouts: K-channel spatial grids built from boxes or point heat-maps.

Coordinate convention: (x, y) at integer pixel centers, origin top-left.
Boxes are half-open ``[x0, x1) x [y0, y1)``. Grids are stored as
``data[k, y, x]`` with shape (K, height, width).
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    GeometryError,
    LayoutParseError,
    MissingStatsError,
    ShapeError,
    VersionError,
    VocabularyError,
)
from .vocab import ClassVocabulary

LAYOUT_SCHEMA_VERSION = 1

BOX_MODE = "box"
POINT_MODE = "point"


@dataclass(frozen=True)
class Box:
    """Half-open pixel-coordinate rectangle."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise GeometryError(f"degenerate box {self}")

    def clipped(self, width: int, height: int) -> "Box":
        x0, y0 = max(self.x0, 0.0), max(self.y0, 0.0)
        x1, y1 = min(self.x1, float(width)), min(self.y1, float(height))
        if not (x0 < x1 and y0 < y1):
            raise GeometryError(f"box {self} lies fully outside {width}x{height} canvas")
        return Box(x0, y0, x1, y1)

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def hflipped(self, width: int) -> "Box":
        return Box(width - self.x1, self.y0, width - self.x0, self.y1)


@dataclass(frozen=True)
class Point:
    """Object center plus scalar size controlling the heat-map spread."""

    cx: float
    cy: float
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise GeometryError(f"point size must be positive, got {self.size}")

    def translated(self, dx: float, dy: float) -> "Point":
        return Point(self.cx + dx, self.cy + dy, self.size)

    def hflipped(self, width: int) -> "Point":
        # Mirror about the pixel-center axis: index x maps to width-1-x.
        return Point(width - 1 - self.cx, self.cy, self.size)


Geometry = Box | Point


@dataclass(frozen=True)
class ObjectSpec:
    """One object to place: class index plus box or point geometry."""

    class_id: int
    geometry: Geometry

    def translated(self, dx: float, dy: float) -> "ObjectSpec":
        return replace(self, geometry=self.geometry.translated(dx, dy))

    def hflipped(self, width: int) -> "ObjectSpec":
        return replace(self, geometry=self.geometry.hflipped(width))


@dataclass(frozen=True)
class ObjectLayout:
    """Encoded layout grid of shape (K, height, width)."""

    data: np.ndarray
    mode: str

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _validate_objects(objects, mode, vocab: ClassVocabulary):
    kind = Box if mode == BOX_MODE else Point
    for i, obj in enumerate(objects):
        if not 0 <= obj.class_id < vocab.size:
            raise VocabularyError(f"object {i}: class index {obj.class_id} not in vocabulary of size {vocab.size}")
        if not isinstance(obj.geometry, kind):
            raise GeometryError(f"object {i}: geometry {type(obj.geometry).__name__} does not match mode {mode!r}")


def encode_layout(
    objects: list[ObjectSpec],
    mode: str,
    width: int,
    height: int,
    vocab: ClassVocabulary | None = None,
) -> ObjectLayout:
    """Encode objects into a K-channel grid.

    Box mode fills each object's clipped bounding box with 1; point mode
    evaluates ``exp(-||(x,y) - c||^2 / s)`` at pixel centers. Same-class
    contributions sum; an empty object list yields an all-zero grid.
    """
    vocab = vocab or ClassVocabulary()
    if mode not in (BOX_MODE, POINT_MODE):
        raise ValueError(f"unknown layout mode {mode!r}")
    if width <= 0 or height <= 0:
        raise ShapeError(f"canvas {width}x{height} must be positive")
    _validate_objects(objects, mode, vocab)

    data = np.zeros((vocab.size, height, width), dtype=np.float64)
    if mode == BOX_MODE:
        for obj in objects:
            b = obj.geometry.clipped(width, height)
            x0, x1 = int(round(b.x0)), int(round(b.x1))
            y0, y1 = int(round(b.y0)), int(round(b.y1))
            data[obj.class_id, y0:y1, x0:x1] += 1.0
    else:
        xs = np.arange(width, dtype=np.float64)
        ys = np.arange(height, dtype=np.float64)
        for obj in objects:
            p = obj.geometry
            sq = (xs[None, :] - p.cx) ** 2 + (ys[:, None] - p.cy) ** 2
            data[obj.class_id] += np.exp(-sq / p.size)
    return ObjectLayout(data=data, mode=mode)


def build_layout_pyramid(layout: ObjectLayout, resolutions: list[int]) -> list[ObjectLayout]:
    """Down-scale a square layout to each resolution by repeated 2x2 mean pooling.

    ``resolutions`` may be in any order; each must divide the input size by a
    power of two. Returned list matches the requested order.
    """
    if layout.width != layout.height:
        raise ShapeError(f"pyramid requires a square layout, got {layout.width}x{layout.height}")
    size = layout.width
    levels: dict[int, np.ndarray] = {size: layout.data}
    cur = layout.data
    for res in sorted(set(resolutions), reverse=True):
        if res <= 0 or size % res != 0 or (size // res) & (size // res - 1) != 0:
            raise ShapeError(f"resolution {res} not reachable from {size} by halving")
        while cur.shape[1] > res:
            k, h, w = cur.shape
            cur = cur.reshape(k, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
            levels[cur.shape[1]] = cur
    return [ObjectLayout(data=levels[r], mode=layout.mode) for r in resolutions]


def ground_truth_size(mask_area: int, m: float = 2.5) -> float:
    """Size of an observed object: ``m * sqrt(area)`` with area in pixels."""
    if mask_area < 1:
        raise GeometryError(f"mask area must be >= 1, got {mask_area}")
    if not m > 0:
        raise GeometryError(f"scale constant must be positive, got {m}")
    return m * float(np.sqrt(mask_area))


@dataclass
class SizeStats:
    """Per-class object-size observations with median/mean lookup."""

    m: float = 2.5
    observations: dict[int, list[float]] = field(default_factory=dict)

    def add_area(self, class_id: int, mask_area: int) -> None:
        self.add_size(class_id, ground_truth_size(mask_area, self.m))

    def add_size(self, class_id: int, size: float) -> None:
        if not size > 0:
            raise GeometryError(f"size must be positive, got {size}")
        self.observations.setdefault(class_id, []).append(float(size))

    def count(self, class_id: int) -> int:
        return len(self.observations.get(class_id, ()))

    def to_json(self) -> str:
        return json.dumps(
            {"version": 1, "m": self.m, "observations": {str(k): v for k, v in sorted(self.observations.items())}},
        )

    @classmethod
    def from_json(cls, text: str) -> "SizeStats":
        doc = json.loads(text)
        stats = cls(m=float(doc["m"]))
        for k, sizes in doc["observations"].items():
            for s in sizes:
                stats.add_size(int(k), float(s))
        return stats


def default_size(class_id: int, stats: SizeStats, strategy: str = "median") -> float:
    """Fallback point size for a class: median (default) or mean of training sizes."""
    sizes = stats.observations.get(class_id)
    if not sizes:
        raise MissingStatsError(f"no size observations for class {class_id}")
    if strategy == "median":
        return float(statistics.median(sizes))
    if strategy == "mean":
        return float(statistics.fmean(sizes))
    raise ValueError(f"unknown size strategy {strategy!r}")


# --- layout document (the JSON contract shared by CLI, service, and studio) ---


def serialize_layout(
    objects: list[ObjectSpec],
    mode: str,
    width: int,
    height: int,
    vocab: ClassVocabulary | None = None,
) -> str:
    vocab = vocab or ClassVocabulary()
    _validate_objects(objects, mode, vocab)
    out = []
    for obj in objects:
        entry: dict = {"class": vocab.name(obj.class_id)}
        g = obj.geometry
        if isinstance(g, Box):
            entry["box"] = {"x0": g.x0, "y0": g.y0, "x1": g.x1, "y1": g.y1}
        else:
            entry["point"] = {"cx": g.cx, "cy": g.cy, "size": g.size}
        out.append(entry)
    doc = {
        "version": LAYOUT_SCHEMA_VERSION,
        "mode": mode,
        "canvas": {"width": width, "height": height},
        "objects": out,
    }
    return json.dumps(doc, indent=2)


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise LayoutParseError(f"missing field {key!r}", path=f"{path}.{key}".lstrip("."))
    return doc[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise LayoutParseError(f"expected a number, got {value!r}", path=path)
    return float(value)


def parse_layout(
    text: str,
    vocab: ClassVocabulary | None = None,
    stats: SizeStats | None = None,
    size_strategy: str = "median",
) -> tuple[list[ObjectSpec], str, int, int]:
    """Parse a layout document back into (objects, mode, width, height).

    Point objects may omit ``size``; it is then filled from ``stats`` using
    ``size_strategy``, and it is a parse error if no stats are supplied.
    """
    vocab = vocab or ClassVocabulary()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise LayoutParseError("document root must be an object")

    version = _require(doc, "version", "")
    if version != LAYOUT_SCHEMA_VERSION:
        raise VersionError(f"unsupported layout schema version {version!r}", path="version")
    mode = _require(doc, "mode", "")
    if mode not in (BOX_MODE, POINT_MODE):
        raise LayoutParseError(f"mode must be 'box' or 'point', got {mode!r}", path="mode")
    canvas = _require(doc, "canvas", "")
    width = _require(canvas, "width", "canvas")
    height = _require(canvas, "height", "canvas")
    if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
        raise LayoutParseError("canvas dimensions must be positive integers", path="canvas")

    raw_objects = _require(doc, "objects", "")
    if not isinstance(raw_objects, list):
        raise LayoutParseError("objects must be a list", path="objects")

    objects: list[ObjectSpec] = []
    for i, entry in enumerate(raw_objects):
        path = f"objects[{i}]"
        if not isinstance(entry, dict):
            raise LayoutParseError("object entry must be an object", path=path)
        name = _require(entry, "class", path)
        if name not in vocab:
            raise LayoutParseError(f"unknown class {name!r}", path=f"{path}.class")
        class_id = vocab.index(name)
        has_box, has_point = "box" in entry, "point" in entry
        if has_box == has_point:
            raise LayoutParseError("exactly one of 'box' or 'point' required", path=path)
        if has_box != (mode == BOX_MODE):
            raise LayoutParseError(f"geometry kind does not match document mode {mode!r}", path=path)
        try:
            if has_box:
                b = entry["box"]
                geometry: Geometry = Box(
                    _number(_require(b, "x0", f"{path}.box"), f"{path}.box.x0"),
                    _number(_require(b, "y0", f"{path}.box"), f"{path}.box.y0"),
                    _number(_require(b, "x1", f"{path}.box"), f"{path}.box.x1"),
                    _number(_require(b, "y1", f"{path}.box"), f"{path}.box.y1"),
                )
            else:
                p = entry["point"]
                cx = _number(_require(p, "cx", f"{path}.point"), f"{path}.point.cx")
                cy = _number(_require(p, "cy", f"{path}.point"), f"{path}.point.cy")
                if "size" in p:
                    size = _number(p["size"], f"{path}.point.size")
                else:
                    if stats is None:
                        raise LayoutParseError(
                            "point size omitted and no size statistics available",
                            path=f"{path}.point.size",
                        )
                    try:
                        size = default_size(class_id, stats, size_strategy)
                    except MissingStatsError as exc:
                        raise LayoutParseError(str(exc), path=f"{path}.point.size") from exc
                geometry = Point(cx, cy, size)
        except GeometryError as exc:
            raise LayoutParseError(str(exc), path=path) from exc
        objects.append(ObjectSpec(class_id=class_id, geometry=geometry))
    return objects, mode, width, height
