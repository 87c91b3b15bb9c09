import json
import math

import numpy as np
import pytest
from PIL import Image

from scenedecor.layout import Box, ObjectSpec, Point
from scenedecor.vocab import ClassVocabulary


@pytest.fixture
def vocab():
    return ClassVocabulary()


def brute_force_layout(objects, mode, width, height, k):
    """Independent per-pixel oracle for the layout encodings."""
    grid = np.zeros((k, height, width), dtype=np.float64)
    for y in range(height):
        for x in range(width):
            for obj in objects:
                g = obj.geometry
                if mode == "box":
                    x0 = max(int(round(g.x0)), 0)
                    y0 = max(int(round(g.y0)), 0)
                    x1 = min(int(round(g.x1)), width)
                    y1 = min(int(round(g.y1)), height)
                    if x0 <= x < x1 and y0 <= y < y1:
                        grid[obj.class_id, y, x] += 1.0
                else:
                    sq = (x - g.cx) ** 2 + (y - g.cy) ** 2
                    grid[obj.class_id, y, x] += math.exp(-sq / g.size)
    return grid


def random_objects(rng, mode, width, height, k, n):
    objects = []
    for _ in range(n):
        cid = int(rng.integers(0, k))
        if mode == "box":
            x0 = int(rng.integers(0, max(1, width - 1)))
            y0 = int(rng.integers(0, max(1, height - 1)))
            x1 = int(rng.integers(x0 + 1, width + 1))
            y1 = int(rng.integers(y0 + 1, height + 1))
            geometry = Box(x0, y0, x1, y1)
        else:
            geometry = Point(
                float(rng.uniform(0, width - 1)),
                float(rng.uniform(0, height - 1)),
                float(rng.uniform(0.5, 50.0)),
            )
        objects.append(ObjectSpec(class_id=cid, geometry=geometry))
    return objects


# --- synthetic dataset tree (Structured3D-style) ---

# (semantic NYU id, box in 1280x720 source coordinates)
FIXTURE_OBJECTS = [
    (4, (100, 300, 420, 620)),    # bed
    (11, (120, 60, 280, 200)),    # picture
    (32, (460, 420, 580, 560)),   # nightstand
    (35, (480, 150, 560, 260)),   # lamp
    (16, (620, 40, 700, 400)),    # curtain
]


def build_scene_images(objects=FIXTURE_OBJECTS, size=(1280, 720)):
    w, h = size
    xs = np.linspace(0, 255, w, dtype=np.uint8)
    empty = np.stack([np.tile(xs, (h, 1))] * 3, axis=-1)
    decorated = empty.copy()
    semantic = np.zeros((h, w), dtype=np.uint16)
    semantic[:] = 1  # wall
    instance = np.zeros((h, w), dtype=np.uint16)
    for i, (label, (x0, y0, x1, y1)) in enumerate(objects, start=1):
        decorated[y0:y1, x0:x1] = [40 * i % 255, 90, 160]
        semantic[y0:y1, x0:x1] = label
        instance[y0:y1, x0:x1] = i
    return empty, decorated, semantic, instance


def write_scene(root, scene_id, room_id="100", pos_id="0", room_type="bedroom", objects=FIXTURE_OBJECTS):
    scene = root / f"scene_{scene_id:05d}"
    full = scene / "2D_rendering" / room_id / "perspective" / "full" / pos_id
    empty_dir = scene / "2D_rendering" / room_id / "perspective" / "empty" / pos_id
    full.mkdir(parents=True, exist_ok=True)
    empty_dir.mkdir(parents=True, exist_ok=True)
    empty, decorated, semantic, instance = build_scene_images(objects)
    Image.fromarray(empty).save(empty_dir / "rgb_rawlight.png")
    Image.fromarray(decorated).save(full / "rgb_rawlight.png")
    Image.fromarray(semantic).save(full / "semantic.png")
    Image.fromarray(instance).save(full / "instance.png")
    types_file = scene / "room_types.json"
    types = json.loads(types_file.read_text()) if types_file.exists() else {}
    types[room_id] = room_type
    types_file.write_text(json.dumps(types))
    return scene


@pytest.fixture
def dataset_root(tmp_path):
    root = tmp_path / "dataset"
    root.mkdir()
    for scene_id in (1, 2, 3000, 3001, 4000):
        write_scene(root, scene_id)
    return root
