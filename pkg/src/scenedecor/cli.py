"""Command-line entry points.

Exit codes: 0 ok, 2 missing input, 3 corrupt checkpoint/state, 64 usage
errors, 65 invalid data documents.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import datapipe, layout as layout_mod, metrics as metrics_mod
from .errors import (
    CheckpointError,
    IngestionError,
    LayoutParseError,
    SceneDecorError,
)
from .discriminator import default_discriminator_config, tiny_discriminator_config
from .generator import default_generator_config, tiny_generator_config
from .inference import synthesize
from .training import (
    Trainer,
    TrainConfig,
    load_generator_for_inference,
    train_config_from_dict,
    train_config_to_dict,
)
from .vocab import ClassVocabulary

# Scripting contract: usage errors exit with 64, not click's default 2.
click.UsageError.exit_code = 64

EXIT_MISSING_INPUT = 2
EXIT_CORRUPT_STATE = 3
EXIT_BAD_DATA = 65


def _echo_config(command: str, resolved: dict) -> None:
    click.echo(json.dumps({"command": command, "config": resolved}, sort_keys=True))


@click.group()
def main():
    """Decorate empty room photographs from user-specified object layouts."""


@main.command()
@click.option("--dataset-root", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--room-type", type=click.Choice(["bedroom", "living_room"]), required=True)
@click.option("--per-object-retention", is_flag=True, help="Apply the 60% rule per object instead of to the union.")
def preprocess(dataset_root: Path, out_dir: Path, room_type: str, per_object_retention: bool):
    """Scan a dataset tree, build crops, and write manifests."""
    _echo_config(
        "preprocess",
        {"dataset_root": str(dataset_root), "out": str(out_dir), "room_type": room_type,
         "per_object_retention": per_object_retention},
    )
    try:
        manifest = datapipe.make_manifest(dataset_root, room_type=room_type)
    except IngestionError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_MISSING_INPUT)

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "sources.jsonl")

    vocab = ClassVocabulary()
    stats = layout_mod.SizeStats()
    pairs = []
    for rec in manifest.records:
        root = Path(dataset_root)
        empty = np.asarray(Image.open(root / rec.empty_path).convert("RGB"))
        decorated = np.asarray(Image.open(root / rec.decorated_path).convert("RGB"))
        semantic = np.asarray(Image.open(root / rec.semantic_path))
        instance = np.asarray(Image.open(root / rec.instance_path))
        annotations = datapipe.extract_objects_from_semantics(semantic, instance, vocab)
        crops = datapipe.preprocess_scene(
            empty, decorated, annotations,
            scene_id=rec.scene_id, room_type=rec.room_type,
            per_object_retention=per_object_retention,
        )
        pairs.extend(crops)
        if rec.split == "train":
            for crop in crops:
                for ann in crop.objects:
                    stats.add_area(ann.class_id, ann.mask_area)
    datapipe.write_crops(pairs, out_dir)
    (out_dir / "size_stats.json").write_text(stats.to_json())

    by_split: dict[str, int] = {}
    for p in pairs:
        by_split[datapipe.split_for_scene(p.scene_id)] = by_split.get(datapipe.split_for_scene(p.scene_id), 0) + 1
    for split in ("train", "test"):
        click.echo(f"{split}: {by_split.get(split, 0)} crops")


def _build_trainer(config: TrainConfig, arch: str, data: Path, split: str) -> Trainer:
    pairs = datapipe.load_crops(data, split=split)
    if arch == "full":
        gen_cfg = default_generator_config()
        disc_cfg = default_discriminator_config()
    else:
        gen_cfg = tiny_generator_config()
        disc_cfg = tiny_discriminator_config()
    stats_path = data.parent / "size_stats.json"
    stats = layout_mod.SizeStats.from_json(stats_path.read_text()) if stats_path.exists() else None
    return Trainer(gen_cfg, disc_cfg, config, pairs, stats=stats)


@main.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--data", type=click.Path(path_type=Path), required=True, help="Crop manifest (crops.jsonl).")
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@click.option("--arch", type=click.Choice(["full", "tiny"]), default="full")
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--label-mode", type=click.Choice(["box", "point"]), default=None)
@click.option("--size-strategy", type=click.Choice(["gt", "median", "mean"]), default=None)
@click.option("--m", "size_constant", type=float, default=None)
@click.option("--resume", type=click.Path(path_type=Path), default=None)
def train(config_path, data, out_dir, arch, iterations, seed, label_mode, size_strategy, size_constant, resume):
    """Run adversarial training and write checkpoints + a metrics log."""
    doc = json.loads(config_path.read_text()) if config_path else {}
    config = train_config_from_dict({**train_config_to_dict(TrainConfig()), **doc})
    overrides = {
        "seed": seed,
        "label_mode": label_mode,
        "size_strategy": size_strategy,
        "size_constant": size_constant,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields:
        config = train_config_from_dict({**train_config_to_dict(config), **fields})
    total = iterations if iterations is not None else config.total_iterations
    _echo_config("train", {**train_config_to_dict(config), "arch": arch, "iterations": total, "data": str(data)})

    try:
        if resume:
            pairs = datapipe.load_crops(data, split="train")
            trainer = Trainer.from_checkpoint(resume, pairs)
        else:
            trainer = _build_trainer(config, arch, data, "train")
    except CheckpointError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CORRUPT_STATE)
    except IngestionError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_MISSING_INPUT)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer.train(total - trainer.iteration, log_path=out_dir / "metrics.jsonl")
    ckpt = out_dir / "checkpoint.sdc"
    trainer.save_checkpoint(ckpt)
    click.echo(f"saved {ckpt} at iteration {trainer.iteration}")


@main.command()
@click.option("--ckpt", type=click.Path(path_type=Path), required=True)
@click.option("--data", type=click.Path(path_type=Path), required=True, help="Crop manifest (crops.jsonl).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--extractor", type=click.Choice(["toy", "inception"]), default="toy")
@click.option("--label-mode", type=click.Choice(["box", "point"]), default="box")
@click.option("--seed", type=int, default=0)
def evaluate(ckpt, data, out_path, extractor, label_mode, seed):
    """Generate over the test split and report FID/KID against the real crops."""
    _echo_config("evaluate", {"ckpt": str(ckpt), "data": str(data), "extractor": extractor,
                              "label_mode": label_mode, "seed": seed})
    try:
        gen, _meta = load_generator_for_inference(ckpt)
    except CheckpointError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CORRUPT_STATE)
    try:
        pairs = datapipe.load_crops(data, split="test")
    except IngestionError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_MISSING_INPUT)

    ext = metrics_mod.ToyExtractor() if extractor == "toy" else metrics_mod.InceptionExtractor()
    vocab = ClassVocabulary()
    reals, fakes = [], []
    for i, pair in enumerate(pairs):
        background = datapipe.unit_to_image(pair.empty)
        specs = datapipe.annotations_to_specs(pair.objects, label_mode)
        image, _ = synthesize(gen, background, specs, label_mode, latent_seed=seed + i, vocab=vocab)
        reals.append(pair.decorated)
        fakes.append(datapipe.image_to_unit(image))
    real_set = metrics_mod.extract_features(np.stack(reals), ext, source="real")
    fake_set = metrics_mod.extract_features(np.stack(fakes), ext, source="generated")
    report = metrics_mod.metric_report(real_set, fake_set, seed=seed)
    Path(out_path).write_text(json.dumps(report, indent=2))
    click.echo(json.dumps(report))


@main.command()
@click.option("--ckpt", type=click.Path(path_type=Path), default=None,
              help="Checkpoint; omitted = randomly initialized model.")
@click.option("--background", type=click.Path(path_type=Path), required=True)
@click.option("--layout", "layout_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--latent-seed", type=int, default=None)
@click.option("--size-strategy", type=click.Choice(["gt", "median", "mean"]), default="median")
@click.option("--stats", "stats_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=0, help="Init seed when no checkpoint is given.")
def generate(ckpt, background, layout_path, out_path, latent_seed, size_strategy, stats_path, seed):
    """Render one decorated image from a background photo and a layout document."""
    _echo_config("generate", {"ckpt": str(ckpt), "background": str(background), "layout": str(layout_path),
                              "latent_seed": latent_seed, "size_strategy": size_strategy, "seed": seed})
    vocab = ClassVocabulary()
    if ckpt is not None:
        try:
            gen, _ = load_generator_for_inference(Path(ckpt))
        except CheckpointError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CORRUPT_STATE)
    else:
        import torch

        from .generator import Generator

        torch.manual_seed(seed)
        gen = Generator(default_generator_config(vocab.size))

    background_path = Path(background)
    if not background_path.exists():
        click.echo(f"error: background {background_path} does not exist", err=True)
        sys.exit(EXIT_MISSING_INPUT)
    img = np.asarray(Image.open(background_path).convert("RGB"))

    stats = layout_mod.SizeStats.from_json(Path(stats_path).read_text()) if stats_path else None
    try:
        objects, mode, _, _ = layout_mod.parse_layout(
            Path(layout_path).read_text(),
            vocab=vocab,
            stats=stats,
            size_strategy=size_strategy if size_strategy != "gt" else "median",
        )
    except FileNotFoundError:
        click.echo(f"error: layout {layout_path} does not exist", err=True)
        sys.exit(EXIT_MISSING_INPUT)
    except LayoutParseError as exc:
        click.echo(f"error at {exc.path or '<document>'}: {exc}", err=True)
        sys.exit(EXIT_BAD_DATA)

    start = time.perf_counter()
    image, _transform = synthesize(gen, img, objects, mode, latent_seed, vocab)
    elapsed = time.perf_counter() - start
    Image.fromarray(image).save(out_path)
    click.echo(f"wrote {out_path} ({elapsed:.3f} s/image)")


@main.command()
@click.option("--ckpt", type=click.Path(path_type=Path), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--seed", type=int, default=0)
@click.option("--stats", "stats_path", type=click.Path(path_type=Path), default=None)
def serve(ckpt, host, port, seed, stats_path):
    """Run the HTTP generation service."""
    import uvicorn

    from .service import create_app

    _echo_config("serve", {"ckpt": str(ckpt), "host": host, "port": port, "seed": seed})
    app = create_app(
        checkpoint_path=str(ckpt) if ckpt else None,
        seed=seed,
        stats_path=str(stats_path) if stats_path else None,
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
