"""Adversarial training loop: hinge losses, gradient accumulation, EMA, resume.

One iteration updates the discriminator and then the generator, each after
accumulating gradients over ``accumulation_steps`` micro-batches. Real and
fake pairs receive independent paired augmentations (image and layout moved
together). The generator keeps an exponential moving average of its weights
for inference.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import layout as layout_mod
from .checkpoint import load_container, save_container
from .datapipe import AugmentPolicy, ScenePair, annotations_to_specs, augment_pair
from .discriminator import (
    DiscBlockSpec,
    Discriminator,
    DiscriminatorConfig,
    layout_pyramid_tensors,
)
from .errors import CheckpointError, NumericError
from .generator import GenBlockSpec, Generator, GeneratorConfig
from .layout import encode_layout
from .vocab import ClassVocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lambda_obj: float = 0.01
    learning_rate: float = 1e-4
    batch_size: int = 32
    accumulation_steps: int = 4
    total_iterations: int = 400_000
    ema_decay: float = 0.999
    beta1: float = 0.0
    beta2: float = 0.99
    seed: int = 0
    label_mode: str = layout_mod.BOX_MODE
    size_strategy: str = "gt"  # gt | median | mean
    size_constant: float = 2.5
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    include_real_obj_term: bool = False

    def __post_init__(self):
        if self.lambda_obj < 0:
            raise ValueError("lambda_obj must be >= 0")
        if self.accumulation_steps < 1:
            raise ValueError("accumulation_steps must be >= 1")


def d_loss(
    d_adv_real: torch.Tensor,
    d_adv_fake: torch.Tensor,
    d_obj_fake: torch.Tensor,
    lambda_obj: float,
    d_obj_real: torch.Tensor | None = None,
) -> torch.Tensor:
    """Two-sided hinge: real logits pushed below -1, fake combination above +1."""
    for t in (d_adv_real, d_adv_fake, d_obj_fake, d_obj_real):
        if t is not None and not torch.isfinite(t).all():
            raise NumericError("non-finite discriminator logit")
    if d_obj_real is not None:
        real = torch.relu(1 + d_adv_real + lambda_obj * d_obj_real).mean()
    else:
        real = torch.relu(1 + d_adv_real).mean()
    fake = torch.relu(1 - d_adv_fake - lambda_obj * d_obj_fake).mean()
    return real + fake


def g_loss(d_adv_fake: torch.Tensor, d_obj_fake: torch.Tensor, lambda_obj: float) -> torch.Tensor:
    """Minimized toward the real direction (negative logits under d_loss's convention)."""
    for t in (d_adv_fake, d_obj_fake):
        if not torch.isfinite(t).all():
            raise NumericError("non-finite discriminator logit")
    return (d_adv_fake + lambda_obj * d_obj_fake).mean()


class EmaState:
    """Shadow copy of the generator parameters."""

    def __init__(self, generator: Generator, decay: float = 0.999):
        self.decay = decay
        self.shadow = {name: p.detach().clone() for name, p in generator.named_parameters()}

    def update(self, generator: Generator) -> None:
        with torch.no_grad():
            for name, p in generator.named_parameters():
                if self.shadow[name].shape != p.shape:
                    raise CheckpointError(f"EMA shape mismatch for {name}")
                self.shadow[name].mul_(self.decay).add_(p.detach(), alpha=1 - self.decay)

    def copy_to(self, generator: Generator) -> None:
        with torch.no_grad():
            for name, p in generator.named_parameters():
                p.copy_(self.shadow[name])


@dataclass
class StepReport:
    iteration: int
    d_loss: float
    g_loss: float
    d_grad_norm: float
    g_grad_norm: float
    skipped: bool = False

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _grad_norm(module: nn.Module) -> float:
    total = 0.0
    for p in module.parameters():
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return total ** 0.5


# --- config (de)serialization for checkpoints and config files ---


def generator_config_to_dict(cfg: GeneratorConfig) -> dict:
    return dataclasses.asdict(cfg)


def generator_config_from_dict(doc: dict) -> GeneratorConfig:
    blocks = tuple(GenBlockSpec(**b) for b in doc["blocks"])
    return GeneratorConfig(
        blocks=blocks,
        layout_channels=doc["layout_channels"],
        latent_dim=doc["latent_dim"],
        output_channels=doc["output_channels"],
    )


def discriminator_config_to_dict(cfg: DiscriminatorConfig) -> dict:
    return dataclasses.asdict(cfg)


def discriminator_config_from_dict(doc: dict) -> DiscriminatorConfig:
    return DiscriminatorConfig(
        adv_blocks=tuple(DiscBlockSpec(**b) for b in doc["adv_blocks"]),
        obj_blocks=tuple(DiscBlockSpec(**b) for b in doc["obj_blocks"]),
        branch_resolution=doc["branch_resolution"],
        layout_channels=doc["layout_channels"],
        image_channels=doc["image_channels"],
        condition_on_background=doc["condition_on_background"],
    )


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def train_config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    doc["augment"] = AugmentPolicy(**doc["augment"])
    return TrainConfig(**doc)


class Trainer:
    """Owns the model pair, optimizers, EMA, RNG, and the step loop."""

    def __init__(
        self,
        gen_config: GeneratorConfig,
        disc_config: DiscriminatorConfig,
        train_config: TrainConfig,
        dataset: list[ScenePair],
        vocab: ClassVocabulary | None = None,
        stats: layout_mod.SizeStats | None = None,
        device: str = "cpu",
    ):
        self.gen_config = gen_config
        self.disc_config = disc_config
        self.config = train_config
        self.dataset = dataset
        self.vocab = vocab or ClassVocabulary()
        self.stats = stats
        self.device = torch.device(device)

        torch.manual_seed(train_config.seed)
        self.generator = Generator(gen_config).to(self.device)
        self.discriminator = Discriminator(disc_config).to(self.device)
        self.ema = EmaState(self.generator, train_config.ema_decay)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(),
            lr=train_config.learning_rate,
            betas=(train_config.beta1, train_config.beta2),
        )
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(),
            lr=train_config.learning_rate,
            betas=(train_config.beta1, train_config.beta2),
        )
        self.rng = torch.Generator(device="cpu")
        self.rng.manual_seed(train_config.seed)
        self.iteration = 0
        self.skipped_steps = 0
        self._layout_cache: dict[int, torch.Tensor] = {}

    # --- data access ---

    def _layout_tensor(self, index: int) -> torch.Tensor:
        cached = self._layout_cache.get(index)
        if cached is not None:
            return cached
        pair = self.dataset[index]
        res = self.gen_config.output_resolution
        specs = annotations_to_specs(
            pair.objects,
            self.config.label_mode,
            size_strategy=self.config.size_strategy,
            stats=self.stats,
            m=self.config.size_constant,
        )
        grid = encode_layout(specs, self.config.label_mode, res, res, self.vocab)
        tensor = torch.from_numpy(grid.data.astype(np.float32)).to(self.device)
        self._layout_cache[index] = tensor
        return tensor

    def _sample_batch(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        n = min(self.config.batch_size, len(self.dataset))
        idx = torch.randint(len(self.dataset), (n,), generator=self.rng).tolist()
        xs = torch.stack([torch.from_numpy(self.dataset[i].empty) for i in idx]).to(self.device)
        ys = torch.stack([torch.from_numpy(self.dataset[i].decorated) for i in idx]).to(self.device)
        layouts = torch.stack([self._layout_tensor(i) for i in idx])
        return xs, ys, layouts

    def _augment_batch(self, images: torch.Tensor, layouts: torch.Tensor):
        out_i, out_l = [], []
        for img, lay in zip(images, layouts):
            a, b = augment_pair(img, lay, self.config.augment, self.rng)
            out_i.append(a)
            out_l.append(b)
        return torch.stack(out_i), torch.stack(out_l)

    def _latent(self, n: int) -> torch.Tensor:
        z = torch.randn(n, self.gen_config.latent_dim, generator=self.rng)
        return z.to(self.device)

    # --- the step ---

    def train_step(self) -> StepReport:
        cfg = self.config
        scales = self.disc_config.layout_scales
        accum = cfg.accumulation_steps

        self.generator.train()
        self.discriminator.train()

        d_total, g_total = 0.0, 0.0
        skipped = False
        try:
            self.opt_d.zero_grad(set_to_none=True)
            for _ in range(accum):
                xs, ys, layouts = self._sample_batch()
                with torch.no_grad():
                    fakes = self.generator(xs, layouts, self._latent(xs.shape[0]))
                real_imgs, real_layouts = self._augment_batch(ys, layouts)
                fake_imgs, fake_layouts = self._augment_batch(fakes, layouts)
                adv_real, branch_real = self.discriminator.adv_forward(real_imgs)
                adv_fake, branch_fake = self.discriminator.adv_forward(fake_imgs)
                obj_fake = self.discriminator.obj_forward(branch_fake, layout_pyramid_tensors(fake_layouts, scales))
                obj_real = None
                if cfg.include_real_obj_term:
                    obj_real = self.discriminator.obj_forward(branch_real, layout_pyramid_tensors(real_layouts, scales))
                loss = d_loss(adv_real, adv_fake, obj_fake, cfg.lambda_obj, obj_real)
                (loss / accum).backward()
                d_total += float(loss.detach()) / accum
            d_norm = _grad_norm(self.discriminator)
            self.opt_d.step()

            self.opt_g.zero_grad(set_to_none=True)
            for _ in range(accum):
                xs, ys, layouts = self._sample_batch()
                fakes = self.generator(xs, layouts, self._latent(xs.shape[0]))
                fake_imgs, fake_layouts = self._augment_batch(fakes, layouts)
                adv_fake, branch_fake = self.discriminator.adv_forward(fake_imgs)
                obj_fake = self.discriminator.obj_forward(branch_fake, layout_pyramid_tensors(fake_layouts, scales))
                loss = g_loss(adv_fake, obj_fake, cfg.lambda_obj)
                (loss / accum).backward()
                g_total += float(loss.detach()) / accum
            g_norm = _grad_norm(self.generator)
            self.opt_g.step()
            self.ema.update(self.generator)
        except NumericError:
            logger.warning("non-finite loss at iteration %d; step skipped", self.iteration)
            self.opt_d.zero_grad(set_to_none=True)
            self.opt_g.zero_grad(set_to_none=True)
            self.skipped_steps += 1
            skipped = True
            d_norm = g_norm = float("nan")
            d_total = g_total = float("nan")

        self.iteration += 1
        return StepReport(
            iteration=self.iteration,
            d_loss=d_total,
            g_loss=g_total,
            d_grad_norm=d_norm,
            g_grad_norm=g_norm,
            skipped=skipped,
        )

    def train(self, iterations: int, log_path: Path | None = None, log_every: int = 1):
        reports = []
        handle = open(log_path, "a") if log_path else None
        try:
            start = time.time()
            for _ in range(iterations):
                report = self.train_step()
                reports.append(report)
                if handle and report.iteration % log_every == 0:
                    entry = report.to_json()
                    entry["wall_time"] = time.time() - start
                    handle.write(json.dumps(entry) + "\n")
        finally:
            if handle:
                handle.close()
        return reports

    # --- EMA inference ---

    def ema_generator(self) -> Generator:
        """Fresh generator carrying the EMA parameter set (buffers from live)."""
        gen = Generator(self.gen_config).to(self.device)
        gen.load_state_dict(self.generator.state_dict())
        self.ema.copy_to(gen)
        gen.eval()
        return gen

    # --- checkpointing ---

    def _optimizer_arrays(self, prefix: str, module: nn.Module, opt: torch.optim.Adam) -> dict[str, np.ndarray]:
        arrays = {}
        for name, p in module.named_parameters():
            state = opt.state.get(p)
            if not state:
                continue
            arrays[f"{prefix}/{name}/step"] = np.asarray(float(state["step"]), dtype=np.float64)
            arrays[f"{prefix}/{name}/exp_avg"] = state["exp_avg"].detach().cpu().numpy()
            arrays[f"{prefix}/{name}/exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
        return arrays

    def _restore_optimizer(self, prefix: str, module: nn.Module, opt: torch.optim.Adam, arrays):
        for name, p in module.named_parameters():
            key = f"{prefix}/{name}/step"
            if key not in arrays:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(arrays[key])),
                "exp_avg": torch.from_numpy(arrays[f"{prefix}/{name}/exp_avg"].copy()).to(p.device),
                "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}/{name}/exp_avg_sq"].copy()).to(p.device),
            }

    def save_checkpoint(self, path: Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for name, t in self.generator.state_dict().items():
            arrays[f"generator/{name}"] = t.detach().cpu().numpy()
        for name, t in self.discriminator.state_dict().items():
            arrays[f"discriminator/{name}"] = t.detach().cpu().numpy()
        for name, t in self.ema.shadow.items():
            arrays[f"ema/{name}"] = t.detach().cpu().numpy()
        arrays.update(self._optimizer_arrays("opt_g", self.generator, self.opt_g))
        arrays.update(self._optimizer_arrays("opt_d", self.discriminator, self.opt_d))
        arrays["rng/state"] = self.rng.get_state().numpy()
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "train-checkpoint",
            "iteration": self.iteration,
            "skipped_steps": self.skipped_steps,
            "gen_config": generator_config_to_dict(self.gen_config),
            "disc_config": discriminator_config_to_dict(self.disc_config),
            "train_config": train_config_to_dict(self.config),
            "classes": list(self.vocab.classes),
        }
        save_container(path, arrays, meta)

    def load_checkpoint_state(self, path: Path) -> None:
        arrays, meta = load_container(path)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
        _load_module_arrays(self.generator, arrays, "generator")
        _load_module_arrays(self.discriminator, arrays, "discriminator")
        for name in self.ema.shadow:
            key = f"ema/{name}"
            if key not in arrays:
                raise CheckpointError(f"checkpoint missing {key}")
            self.ema.shadow[name] = torch.from_numpy(arrays[key].copy()).to(self.device)
        self._restore_optimizer("opt_g", self.generator, self.opt_g, arrays)
        self._restore_optimizer("opt_d", self.discriminator, self.opt_d, arrays)
        self.rng.set_state(torch.from_numpy(arrays["rng/state"].copy()))
        self.iteration = meta["iteration"]
        self.skipped_steps = meta["skipped_steps"]

    @classmethod
    def from_checkpoint(
        cls,
        path: Path,
        dataset: list[ScenePair],
        vocab: ClassVocabulary | None = None,
        stats: layout_mod.SizeStats | None = None,
        device: str = "cpu",
    ) -> "Trainer":
        _, meta = load_container(path)
        trainer = cls(
            generator_config_from_dict(meta["gen_config"]),
            discriminator_config_from_dict(meta["disc_config"]),
            train_config_from_dict(meta["train_config"]),
            dataset,
            vocab=vocab,
            stats=stats,
            device=device,
        )
        trainer.load_checkpoint_state(path)
        return trainer


def _load_module_arrays(module: nn.Module, arrays: dict[str, np.ndarray], prefix: str) -> None:
    state = module.state_dict()
    for name, tensor in state.items():
        key = f"{prefix}/{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing parameter {key}")
        arr = arrays[key]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise CheckpointError(f"shape mismatch for {key}: checkpoint {arr.shape}, config {tuple(tensor.shape)}")
        state[name] = torch.from_numpy(arr.copy()).to(tensor.device, dtype=tensor.dtype)
    module.load_state_dict(state)


def load_generator_for_inference(path: Path, ema: bool = True) -> tuple[Generator, dict]:
    """Load just the generator (EMA weights by default) from a checkpoint."""
    arrays, meta = load_container(path)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
    gen = Generator(generator_config_from_dict(meta["gen_config"]))
    _load_module_arrays(gen, arrays, "generator")
    if ema:
        with torch.no_grad():
            for name, p in gen.named_parameters():
                key = f"ema/{name}"
                if key not in arrays:
                    raise CheckpointError(f"checkpoint missing {key}")
                p.copy_(torch.from_numpy(arrays[key].copy()))
    gen.eval()
    return gen, meta
