import base64
import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from scenedecor.datapipe import ObjectAnnotation, ScenePair
from scenedecor.discriminator import tiny_discriminator_config
from scenedecor.generator import tiny_generator_config
from scenedecor.layout import Box, ObjectSpec, serialize_layout
from scenedecor.service.app import MAX_UPLOAD_BYTES, create_app
from scenedecor.training import TrainConfig, Trainer
from scenedecor.vocab import DEFAULT_CLASSES


def png_bytes(w=80, h=60):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[..., 0] = np.linspace(0, 255, w, dtype=np.uint8)[None, :]
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def layout_doc(w=80, h=60, class_name="cabinet"):
    return {
        "version": 1,
        "mode": "box",
        "canvas": {"width": w, "height": h},
        "objects": [{"class": class_name, "box": {"x0": 10, "y0": 10, "x1": 50, "y1": 40}}],
    }


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    pair = ScenePair(
        empty=np.zeros((3, 64, 64), dtype=np.float32),
        decorated=np.zeros((3, 64, 64), dtype=np.float32),
        objects=[ObjectAnnotation(3, (8.0, 8.0, 32.0, 32.0), (20.0, 20.0), 576)],
        scene_id=0,
    )
    trainer = Trainer(
        tiny_generator_config(width=8, latent_dim=8),
        tiny_discriminator_config(width=8),
        TrainConfig(batch_size=1, accumulation_steps=1, seed=3),
        [pair],
    )
    path = tmp_path_factory.mktemp("ckpt") / "model.sdc"
    trainer.save_checkpoint(path)
    return path


@pytest.fixture()
def client(checkpoint):
    with TestClient(create_app(checkpoint_path=str(checkpoint))) as c:
        yield c


def generate(client, **overrides):
    body = {
        "background": base64.b64encode(png_bytes()).decode("ascii"),
        "layout": layout_doc(),
        "latent_seed": 7,
    }
    body.update(overrides)
    return client.post("/v1/generate", json=body)


class TestHealthAndClasses:
    def test_health_ready(self, client):
        doc = client.get("/v1/health").json()
        assert doc["ready"] is True
        assert doc["model_id"].startswith("checkpoint:model.sdc@")
        assert doc["queue_depth"] == 0

    def test_not_ready_before_load(self, checkpoint):
        app = create_app(checkpoint_path=str(checkpoint), defer_load=True)
        with TestClient(app) as c:
            assert c.get("/v1/health").json()["ready"] is False
            resp = generate(c)
            assert resp.status_code == 503

    def test_classes_are_the_twelve_class_vocabulary(self, client):
        doc = client.get("/v1/classes").json()
        assert [e["name"] for e in doc] == list(DEFAULT_CLASSES)
        assert [e["index"] for e in doc] == list(range(12))
        assert all(e["color"].startswith("#") and len(e["color"]) == 7 for e in doc)

    def test_spec_endpoint(self, client):
        doc = client.get("/v1/spec").json()
        assert "/v1/generate" in doc["paths"]


class TestGenerate:
    def test_contract(self, client):
        resp = generate(client)
        assert resp.status_code == 200
        doc = resp.json()
        img = Image.open(io.BytesIO(base64.b64decode(doc["image"])))
        assert img.size == (64, 64)
        assert doc["latency_ms"] > 0
        assert doc["transform"]["canvas_size"] == 64
        assert len(doc["request_id"]) == 32

    def test_seed_determinism(self, client):
        a = generate(client, latent_seed=11).json()
        b = generate(client, latent_seed=11).json()
        assert a["image"] == b["image"]
        assert a["request_id"] != b["request_id"]
        c = generate(client, latent_seed=12).json()
        assert a["image"] != c["image"]

    def test_multipart_upload(self, client, checkpoint):
        resp = client.post(
            "/v1/generate",
            files={"background": ("bg.png", png_bytes(), "image/png")},
            data={"layout": json.dumps(layout_doc()), "latent_seed": "7"},
        )
        assert resp.status_code == 200
        assert resp.json()["image"] == generate(client).json()["image"]


class TestValidation:
    def test_unknown_class_is_400_with_field_path(self, client):
        resp = generate(client, layout=layout_doc(class_name="fireplace"))
        assert resp.status_code == 400
        doc = resp.json()
        assert doc["path"] == "objects[0].class"
        assert "fireplace" in doc["error"]

    def test_bad_base64(self, client):
        resp = generate(client, background="!!not-base64!!")
        assert resp.status_code == 400
        assert resp.json()["path"] == "background"

    def test_undecodable_image(self, client):
        resp = generate(client, background=base64.b64encode(b"plain text").decode())
        assert resp.status_code == 400
        assert resp.json()["path"] == "background"

    def test_missing_field(self, client):
        resp = client.post("/v1/generate", json={"layout": layout_doc()})
        assert resp.status_code == 400
        assert "background" in resp.json()["path"]

    def test_canvas_mismatch(self, client):
        resp = generate(client, layout=layout_doc(w=99, h=60))
        assert resp.status_code == 400
        assert resp.json()["path"] == "layout.canvas"

    def test_version_mismatch(self, client):
        doc = layout_doc()
        doc["version"] = 2
        resp = generate(client, layout=doc)
        assert resp.status_code == 400

    def test_oversized_body_is_413(self, client):
        resp = generate(client, background="A" * (MAX_UPLOAD_BYTES + 1024))
        assert resp.status_code == 413

    def test_layout_round_trips_through_serializer(self, client):
        text = serialize_layout([ObjectSpec(0, Box(10, 10, 50, 40))], "box", 80, 60)
        resp = generate(client, layout=json.loads(text))
        assert resp.status_code == 200
