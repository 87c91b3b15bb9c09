"""Dataset ingestion, pair preprocessing, and paired differentiable augmentation.

Source renders are 1280x720 aligned empty/decorated pairs with NYU-style
semantic and instance masks. Preprocessing resizes to 456x256 and emits up to
two 256x256 crops per source, keeping only crops that retain at least 60% of
the foreground object pixels and at least 4 objects.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import AlignmentError, IngestionError, ShapeError
from .vocab import BACKGROUND_CLASSES, ClassVocabulary

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SOURCE_SIZE = (1280, 720)
RESIZED_SIZE = (456, 256)
CROP_SIZE = 256
TRAIN_SCENE_THRESHOLD = 3000
MIN_OBJECTS = 4
RETENTION_THRESHOLD = 0.60

# NYU-Depth V2 40-class names indexed by mask value (index 0 unused).
NYU40_NAMES = (
    "",
    "wall", "floor", "cabinet", "bed", "chair", "sofa", "table", "door",
    "window", "bookshelf", "picture", "counter", "blinds", "desk", "shelves",
    "curtain", "dresser", "pillow", "mirror", "floor mat", "clothes",
    "ceiling", "books", "refridgerator", "television", "paper", "towel",
    "shower curtain", "box", "whiteboard", "person", "nightstand", "toilet",
    "sink", "lamp", "bathtub", "bag", "otherstructure", "otherfurniture",
    "otherprop",
)


@dataclass
class ObjectAnnotation:
    """One foreground instance in image coordinates."""

    class_id: int
    bbox: tuple[float, float, float, float]  # half-open (x0, y0, x1, y1)
    centroid: tuple[float, float]
    mask_area: int
    mask: np.ndarray | None = None  # full-image boolean mask, optional


@dataclass
class ScenePair:
    """Aligned empty/decorated crop with its surviving annotations."""

    empty: np.ndarray  # (3, H, W) float32 in [-1, 1]
    decorated: np.ndarray
    objects: list[ObjectAnnotation]
    scene_id: int
    room_type: str = "unknown"
    crop_x: int = 0


@dataclass(frozen=True)
class AugmentPolicy:
    translate_prob: float = 0.30
    hflip_prob: float = 0.50
    max_translate_fraction: float = 0.125

    def __post_init__(self):
        for name in ("translate_prob", "hflip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")


def image_to_unit(img: np.ndarray) -> np.ndarray:
    """uint8 HxWx3 -> float32 3xHxW in [-1, 1]."""
    return (img.astype(np.float32).transpose(2, 0, 1) / 127.5) - 1.0


def unit_to_image(arr: np.ndarray) -> np.ndarray:
    """float 3xHxW in [-1, 1] -> uint8 HxWx3."""
    return np.clip((arr.transpose(1, 2, 0) + 1.0) * 127.5, 0, 255).round().astype(np.uint8)


def extract_objects_from_semantics(
    semantic_mask: np.ndarray,
    instance_mask: np.ndarray,
    vocab: ClassVocabulary | None = None,
    class_names: tuple[str, ...] = NYU40_NAMES,
    instance_background: int = 0,
) -> list[ObjectAnnotation]:
    """One annotation per foreground instance; background classes are dropped.

    The class of an instance is the majority semantic label over its pixels.
    Instances spanning zero pixels, background classes, and classes outside
    the vocabulary are skipped.
    """
    vocab = vocab or ClassVocabulary()
    if semantic_mask.shape != instance_mask.shape:
        raise AlignmentError(
            f"semantic {semantic_mask.shape} and instance {instance_mask.shape} masks disagree"
        )
    annotations = []
    for inst_id in np.unique(instance_mask):
        if inst_id == instance_background:
            continue
        mask = instance_mask == inst_id
        count = int(mask.sum())
        if count == 0:
            logger.warning("instance %s spans zero pixels, skipped", inst_id)
            continue
        labels, freq = np.unique(semantic_mask[mask], return_counts=True)
        label = int(labels[np.argmax(freq)])
        name = class_names[label] if 0 <= label < len(class_names) else ""
        if name in BACKGROUND_CLASSES or name not in vocab:
            continue
        ys, xs = np.nonzero(mask)
        bbox = (float(xs.min()), float(ys.min()), float(xs.max()) + 1, float(ys.max()) + 1)
        centroid = (float(xs.mean()), float(ys.mean()))
        annotations.append(
            ObjectAnnotation(
                class_id=vocab.index(name),
                bbox=bbox,
                centroid=centroid,
                mask_area=count,
                mask=mask,
            )
        )
    return annotations


def _resize_annotations(annotations, sx: float, sy: float, out_w: int, out_h: int):
    resized = []
    for ann in annotations:
        x0, y0, x1, y1 = ann.bbox
        mask = None
        if ann.mask is not None:
            mask = np.asarray(
                Image.fromarray(ann.mask.astype(np.uint8)).resize((out_w, out_h), Image.NEAREST),
                dtype=bool,
            )
        area = int(mask.sum()) if mask is not None else max(1, int(round(ann.mask_area * sx * sy)))
        resized.append(
            ObjectAnnotation(
                class_id=ann.class_id,
                bbox=(x0 * sx, y0 * sy, x1 * sx, y1 * sy),
                centroid=(ann.centroid[0] * sx, ann.centroid[1] * sy),
                mask_area=area,
                mask=mask,
            )
        )
    return resized


def _foreground_union(annotations, width: int, height: int) -> np.ndarray:
    union = np.zeros((height, width), dtype=bool)
    for ann in annotations:
        if ann.mask is not None:
            union |= ann.mask
        else:
            x0, y0, x1, y1 = ann.bbox
            union[int(round(y0)): int(round(y1)), int(round(x0)): int(round(x1))] = True
    return union


def _object_pixels(ann: ObjectAnnotation, width: int, height: int) -> np.ndarray:
    if ann.mask is not None:
        return ann.mask
    single = np.zeros((height, width), dtype=bool)
    x0, y0, x1, y1 = ann.bbox
    single[int(round(y0)): int(round(y1)), int(round(x0)): int(round(x1))] = True
    return single


def _crop_annotations(annotations, crop_x: int, width: int):
    kept = []
    for ann in annotations:
        x0, y0, x1, y1 = ann.bbox
        nx0, nx1 = max(x0 - crop_x, 0.0), min(x1 - crop_x, float(width))
        if nx0 >= nx1:
            continue
        mask = ann.mask[:, crop_x: crop_x + width] if ann.mask is not None else None
        area = int(mask.sum()) if mask is not None else max(1, int(round(ann.mask_area * (nx1 - nx0) / (x1 - x0))))
        if area == 0:
            continue
        kept.append(
            ObjectAnnotation(
                class_id=ann.class_id,
                bbox=(nx0, y0, nx1, y1),
                centroid=(ann.centroid[0] - crop_x, ann.centroid[1]),
                mask_area=area,
                mask=mask,
            )
        )
    return kept


def valid_crop_offsets(annotations, per_object: bool = False) -> list[int]:
    """Crop x-offsets (into the 456-wide strip) passing the 60% retention rule.

    Default denominator is the union of all foreground pixels; ``per_object``
    requires every object to individually retain 60% of its pixels.
    """
    w, h = RESIZED_SIZE
    offsets = []
    if per_object:
        masks = [_object_pixels(a, w, h) for a in annotations]
        totals = [m.sum() for m in masks]
        for off in range(w - CROP_SIZE + 1):
            if all(
                m[:, off: off + CROP_SIZE].sum() >= RETENTION_THRESHOLD * t
                for m, t in zip(masks, totals)
                if t > 0
            ):
                offsets.append(off)
        return offsets
    union = _foreground_union(annotations, w, h)
    total = union.sum()
    if total == 0:
        return list(range(w - CROP_SIZE + 1))
    cols = union.sum(axis=0)
    csum = np.concatenate(([0], np.cumsum(cols)))
    for off in range(w - CROP_SIZE + 1):
        if csum[off + CROP_SIZE] - csum[off] >= RETENTION_THRESHOLD * total:
            offsets.append(off)
    return offsets


def preprocess_scene(
    source_empty: np.ndarray,
    source_decorated: np.ndarray,
    annotations: list[ObjectAnnotation],
    scene_id: int = 0,
    room_type: str = "unknown",
    per_object_retention: bool = False,
) -> list[ScenePair]:
    """Resize a 1280x720 pair to 456x256 and emit up to two qualifying crops.

    Crop positions are the leftmost and rightmost offsets passing the
    retention rule; crops keeping fewer than 4 objects are dropped.
    """
    if source_empty.shape != source_decorated.shape:
        raise AlignmentError(
            f"empty {source_empty.shape} and decorated {source_decorated.shape} images disagree"
        )
    src_h, src_w = source_empty.shape[:2]
    out_w, out_h = RESIZED_SIZE
    sx, sy = out_w / src_w, out_h / src_h

    empty = np.asarray(Image.fromarray(source_empty).resize(RESIZED_SIZE, Image.BILINEAR))
    decorated = np.asarray(Image.fromarray(source_decorated).resize(RESIZED_SIZE, Image.BILINEAR))
    anns = _resize_annotations(annotations, sx, sy, out_w, out_h)

    offsets = valid_crop_offsets(anns, per_object=per_object_retention)
    if not offsets:
        return []
    chosen = [offsets[0]] if offsets[0] == offsets[-1] else [offsets[0], offsets[-1]]

    pairs = []
    for off in chosen:
        kept = _crop_annotations(anns, off, CROP_SIZE)
        if len(kept) < MIN_OBJECTS:
            continue
        pairs.append(
            ScenePair(
                empty=image_to_unit(empty[:, off: off + CROP_SIZE]),
                decorated=image_to_unit(decorated[:, off: off + CROP_SIZE]),
                objects=kept,
                scene_id=scene_id,
                room_type=room_type,
                crop_x=off,
            )
        )
    return pairs


def augment_pair(
    image: torch.Tensor,
    layout: torch.Tensor,
    policy: AugmentPolicy,
    rng: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Apply the same random shift/flip to an image and its layout.

    Both tensors are (C, H, W) and share spatial dimensions. Transforms are
    differentiable pass-throughs: pad-and-slice translation with zero fill,
    and horizontal mirroring.
    """
    if image.shape[-2:] != layout.shape[-2:]:
        raise ShapeError(f"image {tuple(image.shape)} and layout {tuple(layout.shape)} spatial dims disagree")
    h, w = image.shape[-2:]
    if torch.rand((), generator=rng).item() < policy.translate_prob:
        max_dx = int(round(w * policy.max_translate_fraction))
        max_dy = int(round(h * policy.max_translate_fraction))
        dx = int(torch.randint(-max_dx, max_dx + 1, (), generator=rng).item()) if max_dx else 0
        dy = int(torch.randint(-max_dy, max_dy + 1, (), generator=rng).item()) if max_dy else 0
        image = translate2d(image, dx, dy)
        layout = translate2d(layout, dx, dy)
    if torch.rand((), generator=rng).item() < policy.hflip_prob:
        image = torch.flip(image, dims=[-1])
        layout = torch.flip(layout, dims=[-1])
    return image, layout


def translate2d(t: torch.Tensor, dx: int, dy: int) -> torch.Tensor:
    """Shift the last two dims by (dx, dy) with zero fill."""
    if dx == 0 and dy == 0:
        return t
    h, w = t.shape[-2:]
    pad = torch.nn.functional.pad(t, (max(dx, 0), max(-dx, 0), max(dy, 0), max(-dy, 0)))
    x0 = max(-dx, 0)
    y0 = max(-dy, 0)
    return pad[..., y0: y0 + h, x0: x0 + w]


# --- manifest of raw dataset sources ---


@dataclass(frozen=True)
class SourceRecord:
    scene_id: int
    room_id: str
    position_id: str
    room_type: str
    split: str
    empty_path: str
    decorated_path: str
    semantic_path: str
    instance_path: str

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "room_id": self.room_id,
            "position_id": self.position_id,
            "room_type": self.room_type,
            "split": self.split,
            "empty_path": self.empty_path,
            "decorated_path": self.decorated_path,
            "semantic_path": self.semantic_path,
            "instance_path": self.instance_path,
        }


@dataclass
class DatasetManifest:
    records: list[SourceRecord] = field(default_factory=list)

    def split(self, which: str) -> list[SourceRecord]:
        return [r for r in self.records if r.split == which]

    def write(self, path: Path) -> None:
        lines = [json.dumps({"version": MANIFEST_VERSION, "kind": "source-manifest"})]
        lines += [json.dumps(r.to_json(), sort_keys=True) for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path: Path) -> "DatasetManifest":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise IngestionError(f"empty manifest {path}")
        header = json.loads(lines[0])
        if header.get("version") != MANIFEST_VERSION:
            raise IngestionError(f"unsupported manifest version {header.get('version')!r}")
        records = [SourceRecord(**json.loads(line)) for line in lines[1:] if line]
        return cls(records=records)


def split_for_scene(scene_id: int) -> str:
    return "train" if scene_id < TRAIN_SCENE_THRESHOLD else "test"


def make_manifest(dataset_root: Path, room_type: str | None = None) -> DatasetManifest:
    """Scan a Structured3D-style tree into a sorted, deterministic manifest.

    Expected layout per view::

        scene_XXXXX/2D_rendering/<room>/perspective/full/<pos>/
            rgb_rawlight.png, semantic.png, instance.png
        scene_XXXXX/2D_rendering/<room>/perspective/empty/<pos>/rgb_rawlight.png

    Room types come from an optional ``room_types.json`` (room id -> type) in
    each scene directory; rooms without a type are kept as "unknown" and
    excluded when a room_type filter is requested.
    """
    root = Path(dataset_root)
    if not root.is_dir():
        raise IngestionError(f"dataset root {root} does not exist")
    scene_dirs = sorted(root.glob("scene_*"))
    if not scene_dirs:
        raise IngestionError(f"no scene_* directories under {root}")

    records = []
    for scene_dir in scene_dirs:
        try:
            scene_id = int(scene_dir.name.split("_")[1])
        except (IndexError, ValueError):
            logger.warning("skipping unrecognized scene directory %s", scene_dir.name)
            continue
        types_file = scene_dir / "room_types.json"
        room_types = json.loads(types_file.read_text()) if types_file.exists() else {}
        rendering = scene_dir / "2D_rendering"
        if not rendering.is_dir():
            continue
        for room_dir in sorted(rendering.iterdir()):
            rtype = room_types.get(room_dir.name, "unknown")
            if room_type is not None and rtype != room_type:
                continue
            full_root = room_dir / "perspective" / "full"
            empty_root = room_dir / "perspective" / "empty"
            if not full_root.is_dir():
                continue
            for pos_dir in sorted(full_root.iterdir()):
                paths = {
                    "decorated_path": pos_dir / "rgb_rawlight.png",
                    "semantic_path": pos_dir / "semantic.png",
                    "instance_path": pos_dir / "instance.png",
                    "empty_path": empty_root / pos_dir.name / "rgb_rawlight.png",
                }
                missing = [str(p) for p in paths.values() if not p.exists()]
                if missing:
                    raise IngestionError("missing dataset files: " + ", ".join(missing))
                records.append(
                    SourceRecord(
                        scene_id=scene_id,
                        room_id=room_dir.name,
                        position_id=pos_dir.name,
                        room_type=rtype,
                        split=split_for_scene(scene_id),
                        **{k: str(v.relative_to(root)) for k, v in paths.items()},
                    )
                )
    if not records:
        logger.warning("manifest for %s (room_type=%s) is empty", root, room_type)
    return DatasetManifest(records=records)


# --- preprocessed crop storage (output of the preprocess command) ---


def write_crops(pairs: list[ScenePair], out_dir: Path, manifest_name: str = "crops.jsonl") -> Path:
    """Persist crops as PNG pairs plus a JSONL manifest with annotations."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"version": MANIFEST_VERSION, "kind": "crop-manifest"})]
    for i, pair in enumerate(pairs):
        stem = f"{pair.scene_id:05d}_{i:05d}"
        Image.fromarray(unit_to_image(pair.empty)).save(out_dir / f"{stem}_empty.png")
        Image.fromarray(unit_to_image(pair.decorated)).save(out_dir / f"{stem}_full.png")
        lines.append(
            json.dumps(
                {
                    "stem": stem,
                    "scene_id": pair.scene_id,
                    "room_type": pair.room_type,
                    "split": split_for_scene(pair.scene_id),
                    "crop_x": pair.crop_x,
                    "objects": [
                        {
                            "class_id": a.class_id,
                            "bbox": list(a.bbox),
                            "centroid": list(a.centroid),
                            "mask_area": a.mask_area,
                        }
                        for a in pair.objects
                    ],
                },
                sort_keys=True,
            )
        )
    path = out_dir / manifest_name
    path.write_text("\n".join(lines) + "\n")
    return path


def load_crops(manifest_path: Path, split: str | None = None) -> list[ScenePair]:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestionError(f"crop manifest {manifest_path} does not exist")
    lines = manifest_path.read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("version") != MANIFEST_VERSION:
        raise IngestionError(f"unsupported crop manifest version {header.get('version')!r}")
    out_dir = manifest_path.parent
    pairs = []
    for line in lines[1:]:
        if not line:
            continue
        rec = json.loads(line)
        if split is not None and rec["split"] != split:
            continue
        empty = np.asarray(Image.open(out_dir / f"{rec['stem']}_empty.png").convert("RGB"))
        decorated = np.asarray(Image.open(out_dir / f"{rec['stem']}_full.png").convert("RGB"))
        objects = [
            ObjectAnnotation(
                class_id=o["class_id"],
                bbox=tuple(o["bbox"]),
                centroid=tuple(o["centroid"]),
                mask_area=o["mask_area"],
            )
            for o in rec["objects"]
        ]
        pairs.append(
            ScenePair(
                empty=image_to_unit(empty),
                decorated=image_to_unit(decorated),
                objects=objects,
                scene_id=rec["scene_id"],
                room_type=rec["room_type"],
                crop_x=rec["crop_x"],
            )
        )
    return pairs


def annotations_to_specs(
    objects: list[ObjectAnnotation],
    mode: str,
    size_strategy: str = "gt",
    stats=None,
    m: float = 2.5,
):
    """Turn annotations into layout ObjectSpecs for encoding.

    Point sizes come from the ground-truth mask area (``gt``) or from class
    statistics (``median``/``mean``).
    """
    from . import layout as L

    specs = []
    for ann in objects:
        if mode == L.BOX_MODE:
            geometry = L.Box(*ann.bbox)
        else:
            if size_strategy == "gt":
                size = L.ground_truth_size(ann.mask_area, m)
            else:
                size = L.default_size(ann.class_id, stats, size_strategy)
            geometry = L.Point(ann.centroid[0], ann.centroid[1], size)
        specs.append(L.ObjectSpec(class_id=ann.class_id, geometry=geometry))
    return specs
