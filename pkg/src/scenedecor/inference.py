"""Single-image synthesis: letterboxing, coordinate mapping, generator call."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from PIL import Image

from .datapipe import image_to_unit, unit_to_image
from .generator import Generator
from .layout import Box, ObjectSpec, Point, encode_layout
from .vocab import ClassVocabulary


@dataclass(frozen=True)
class LetterboxTransform:
    """Maps source-image coordinates into the square model canvas."""

    scale: float
    offset_x: int
    offset_y: int
    canvas_size: int

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "offset_x": self.offset_x,
            "offset_y": self.offset_y,
            "canvas_size": self.canvas_size,
        }


def letterbox(image: np.ndarray, size: int) -> tuple[np.ndarray, LetterboxTransform]:
    """Fit an HxWx3 uint8 image into a size x size canvas, preserving aspect."""
    h, w = image.shape[:2]
    scale = size / max(w, h)
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    resized = np.asarray(Image.fromarray(image).resize((nw, nh), Image.BILINEAR))
    canvas = np.zeros((size, size, 3), dtype=np.uint8)
    ox, oy = (size - nw) // 2, (size - nh) // 2
    canvas[oy: oy + nh, ox: ox + nw] = resized
    return canvas, LetterboxTransform(scale=scale, offset_x=ox, offset_y=oy, canvas_size=size)


def map_objects(objects: list[ObjectSpec], t: LetterboxTransform) -> list[ObjectSpec]:
    """Rescale object geometry into canvas coordinates.

    Point sizes carry squared-distance units, so they scale by scale^2.
    """
    mapped = []
    for obj in objects:
        g = obj.geometry
        if isinstance(g, Box):
            ng = Box(
                g.x0 * t.scale + t.offset_x,
                g.y0 * t.scale + t.offset_y,
                g.x1 * t.scale + t.offset_x,
                g.y1 * t.scale + t.offset_y,
            )
        else:
            ng = Point(
                g.cx * t.scale + t.offset_x,
                g.cy * t.scale + t.offset_y,
                g.size * t.scale * t.scale,
            )
        mapped.append(replace(obj, geometry=ng))
    return mapped


def synthesize(
    generator: Generator,
    background: np.ndarray,
    objects: list[ObjectSpec],
    mode: str,
    latent_seed: int | None = None,
    vocab: ClassVocabulary | None = None,
) -> tuple[np.ndarray, LetterboxTransform]:
    """Render one decorated image from a background photo and object specs.

    ``background`` is HxWx3 uint8 in source coordinates; object geometry is
    mapped through the letterbox transform. A ``latent_seed`` draws a seeded
    normal latent; None uses the zero latent (deterministic mode).
    """
    vocab = vocab or ClassVocabulary()
    res = generator.config.output_resolution
    canvas, transform = letterbox(background, res)
    grid = encode_layout(map_objects(objects, transform), mode, res, res, vocab)

    x = torch.from_numpy(image_to_unit(canvas))[None]
    layout = torch.from_numpy(grid.data.astype(np.float32))[None]
    if latent_seed is None:
        latent = torch.zeros(1, generator.config.latent_dim)
    else:
        rng = torch.Generator().manual_seed(latent_seed)
        latent = torch.randn(1, generator.config.latent_dim, generator=rng)

    generator.eval()
    with torch.no_grad():
        out = generator(x, layout, latent)[0].numpy()
    return unit_to_image(out), transform
