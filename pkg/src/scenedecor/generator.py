"""Background-conditioned upsampling generator with layout modulation.

Each block modulates its features with the layout grid (spatially adaptive
normalization in a residual block), upsamples by 2, concatenates the
background image at the new resolution, and applies conv + batch norm + GLU.
The last two blocks are gated channel-wise by excitation vectors derived from
the first two blocks' outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError


@dataclass(frozen=True)
class GenBlockSpec:
    index: int
    in_resolution: int
    out_resolution: int
    in_channels: int
    out_channels: int
    sle_source: int | None = None


@dataclass(frozen=True)
class GeneratorConfig:
    blocks: tuple[GenBlockSpec, ...]
    layout_channels: int = 12
    latent_dim: int = 256
    output_channels: int = 3

    def __post_init__(self):
        for b in self.blocks:
            if b.out_resolution != 2 * b.in_resolution:
                raise ShapeError(f"block {b.index} must double resolution, got {b.in_resolution}->{b.out_resolution}")
        indices = [b.index for b in self.blocks]
        for b in self.blocks:
            if b.sle_source is not None and b.sle_source not in indices[: indices.index(b.index)]:
                raise ShapeError(f"block {b.index} SLE source {b.sle_source} is not an earlier block")
        if self.blocks[0].in_channels != self.layout_channels:
            raise ShapeError(
                f"first block must consume the {self.layout_channels}-channel pooled layout, "
                f"got {self.blocks[0].in_channels}"
            )

    @property
    def base_resolution(self) -> int:
        return self.blocks[0].in_resolution

    @property
    def output_resolution(self) -> int:
        return self.blocks[-1].out_resolution

    @property
    def layout_resolutions(self) -> list[int]:
        return [b.in_resolution for b in self.blocks]

    @property
    def background_resolutions(self) -> list[int]:
        return [b.out_resolution for b in self.blocks]


def default_generator_config(layout_channels: int = 12, latent_dim: int = 256) -> GeneratorConfig:
    """The production 256x256 block table."""
    return GeneratorConfig(
        blocks=(
            GenBlockSpec(2, 4, 8, layout_channels, 512),
            GenBlockSpec(3, 8, 16, 512, 512),
            GenBlockSpec(4, 16, 32, 512, 256),
            GenBlockSpec(5, 32, 64, 256, 128),
            GenBlockSpec(6, 64, 128, 128, 64, sle_source=2),
            GenBlockSpec(7, 128, 256, 64, 32, sle_source=3),
        ),
        layout_channels=layout_channels,
        latent_dim=latent_dim,
    )


def tiny_generator_config(layout_channels: int = 12, latent_dim: int = 16, width: int = 16) -> GeneratorConfig:
    """Reduced 64x64 config for tests and smoke training."""
    return GeneratorConfig(
        blocks=(
            GenBlockSpec(2, 4, 8, layout_channels, width * 4),
            GenBlockSpec(3, 8, 16, width * 4, width * 2),
            GenBlockSpec(4, 16, 32, width * 2, width, sle_source=2),
            GenBlockSpec(5, 32, 64, width, width, sle_source=3),
        ),
        layout_channels=layout_channels,
        latent_dim=latent_dim,
    )


class SpadeNorm(nn.Module):
    """Parameter-free normalization modulated per pixel by the layout.

    Scale and shift maps come from a two-stage k3 convolution of the layout
    (hidden width = feature_channels // 2); output is
    ``normalized * (1 + gamma) + beta``.
    """

    def __init__(self, feature_channels: int, layout_channels: int):
        super().__init__()
        hidden = max(feature_channels // 2, 1)
        self.norm = nn.BatchNorm2d(feature_channels, affine=False)
        self.shared = nn.Sequential(nn.Conv2d(layout_channels, hidden, 3, padding=1), nn.ReLU())
        self.gamma = nn.Conv2d(hidden, feature_channels, 3, padding=1)
        self.beta = nn.Conv2d(hidden, feature_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, layout: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != layout.shape[-2:]:
            raise ShapeError(f"feature {tuple(x.shape)} and layout {tuple(layout.shape)} spatial dims disagree")
        normalized = self.norm(x)
        h = self.shared(layout)
        return normalized * (1 + self.gamma(h)) + self.beta(h)


class SpadeResidual(nn.Module):
    """Two layout-modulated normalization layers with a skip connection.

    No convolution follows the normalization layers; channel count is
    unchanged, and only a ReLU sits between the two layers.
    """

    def __init__(self, channels: int, layout_channels: int):
        super().__init__()
        self.spade1 = SpadeNorm(channels, layout_channels)
        self.spade2 = SpadeNorm(channels, layout_channels)

    def forward(self, x: torch.Tensor, layout: torch.Tensor) -> torch.Tensor:
        return x + self.spade2(F.relu(self.spade1(x, layout)), layout)


class SkipLayerExcitation(nn.Module):
    """Collapse an early feature map into a per-channel gate in (0, 1)."""

    def __init__(self, source_channels: int, dest_channels: int):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(4)
        self.collapse = nn.Conv2d(source_channels, dest_channels, 4)
        self.project = nn.Conv2d(dest_channels, dest_channels, 1)

    def forward(self, source: torch.Tensor) -> torch.Tensor:
        v = F.leaky_relu(self.collapse(self.pool(source)), 0.1)
        return torch.sigmoid(self.project(v))  # (B, dest_channels, 1, 1)


class GeneratorBlock(nn.Module):
    """One doubling stage: modulate, upsample, fuse background, conv-BN-GLU."""

    def __init__(self, spec: GenBlockSpec, layout_channels: int, image_channels: int = 3):
        super().__init__()
        self.spec = spec
        self.residual = SpadeResidual(spec.in_channels, layout_channels)
        self.conv = nn.Conv2d(spec.in_channels + image_channels, 2 * spec.out_channels, 3, padding=1)
        self.bn = nn.BatchNorm2d(2 * spec.out_channels)

    def forward(
        self,
        x: torch.Tensor,
        layout: torch.Tensor,
        background: torch.Tensor,
        sle_gate: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if background.shape[-1] != 2 * x.shape[-1]:
            raise ShapeError(
                f"background resolution {background.shape[-1]} must be twice the feature resolution {x.shape[-1]}"
            )
        x = self.residual(x, layout)
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = torch.cat([x, background], dim=1)
        x = F.glu(self.bn(self.conv(x)), dim=1)
        if sle_gate is not None:
            x = x * sle_gate
        return x


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.latent_proj = nn.Linear(config.latent_dim, config.layout_channels)
        self.blocks = nn.ModuleList(
            GeneratorBlock(spec, config.layout_channels, config.output_channels) for spec in config.blocks
        )
        out_by_index = {b.index: b.out_channels for b in config.blocks}
        self.sle = nn.ModuleDict(
            {
                str(spec.index): SkipLayerExcitation(out_by_index[spec.sle_source], spec.out_channels)
                for spec in config.blocks
                if spec.sle_source is not None
            }
        )
        self.to_image = nn.Conv2d(config.blocks[-1].out_channels, config.output_channels, 3, padding=1)

    def initial_input(self, layout: torch.Tensor, latent: torch.Tensor) -> torch.Tensor:
        """Base 4x4 feature: pooled layout plus the projected latent, broadcast."""
        base = F.adaptive_avg_pool2d(layout, self.config.base_resolution)
        return base + self.latent_proj(latent)[:, :, None, None]

    def forward(self, background: torch.Tensor, layout: torch.Tensor, latent: torch.Tensor) -> torch.Tensor:
        feats = self.forward_features(background, layout, latent)
        return feats["image"]

    def forward_features(
        self, background: torch.Tensor, layout: torch.Tensor, latent: torch.Tensor
    ) -> dict[str, torch.Tensor]:
        """Full forward pass returning intermediate block outputs for probing."""
        cfg = self.config
        if layout.shape[1] != cfg.layout_channels:
            raise ShapeError(f"layout has {layout.shape[1]} channels, config expects {cfg.layout_channels}")
        if background.shape[-1] != cfg.output_resolution or layout.shape[-1] != cfg.output_resolution:
            raise ShapeError(
                f"inputs must be {cfg.output_resolution}x{cfg.output_resolution}, "
                f"got background {background.shape[-1]} and layout {layout.shape[-1]}"
            )
        layouts = {r: F.adaptive_avg_pool2d(layout, r) for r in cfg.layout_resolutions}
        backgrounds = {r: F.adaptive_avg_pool2d(background, r) for r in cfg.background_resolutions}

        x = self.initial_input(layout, latent)
        outputs: dict[str, torch.Tensor] = {}
        block_out: dict[int, torch.Tensor] = {}
        for spec, block in zip(cfg.blocks, self.blocks):
            gate = None
            if spec.sle_source is not None:
                gate = self.sle[str(spec.index)](block_out[spec.sle_source])
            x = block(x, layouts[spec.in_resolution], backgrounds[spec.out_resolution], gate)
            block_out[spec.index] = x
            outputs[f"block{spec.index}"] = x
        outputs["image"] = torch.tanh(self.to_image(x))
        return outputs

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
