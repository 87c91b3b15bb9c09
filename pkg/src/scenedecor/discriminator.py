"""Dual discriminator: a global realism head plus a layout-conformance head.

The realism head is a strided conv pyramid from 256x256 down to a single
logit. The layout head branches off at the 32x32 feature map and keeps
downsampling, concatenating the pooled layout grid at every scale before each
strided convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError


@dataclass(frozen=True)
class DiscBlockSpec:
    index: int
    in_resolution: int
    out_resolution: int
    in_channels: int
    out_channels: int


@dataclass(frozen=True)
class DiscriminatorConfig:
    adv_blocks: tuple[DiscBlockSpec, ...]
    obj_blocks: tuple[DiscBlockSpec, ...]
    branch_resolution: int
    layout_channels: int = 12
    image_channels: int = 3
    # Ablation switch: concatenate the background to the input image.
    condition_on_background: bool = False

    def __post_init__(self):
        for b in self.adv_blocks + self.obj_blocks:
            if b.in_resolution != 2 * b.out_resolution:
                raise ShapeError(f"block {b.index} must halve resolution, got {b.in_resolution}->{b.out_resolution}")
        if self.branch_resolution not in [b.out_resolution for b in self.adv_blocks]:
            raise ShapeError(f"no adversarial block emits the branch resolution {self.branch_resolution}")

    @property
    def input_resolution(self) -> int:
        return self.adv_blocks[0].in_resolution

    @property
    def layout_scales(self) -> list[int]:
        return [b.in_resolution for b in self.obj_blocks]

    @property
    def branch_channels(self) -> int:
        return next(b.out_channels for b in self.adv_blocks if b.out_resolution == self.branch_resolution)


def default_discriminator_config(layout_channels: int = 12) -> DiscriminatorConfig:
    """The production 256x256 block tables."""
    return DiscriminatorConfig(
        adv_blocks=(
            DiscBlockSpec(7, 256, 128, 3, 32),
            DiscBlockSpec(6, 128, 64, 32, 64),
            DiscBlockSpec(5, 64, 32, 64, 128),
            DiscBlockSpec(4, 32, 16, 128, 256),
            DiscBlockSpec(3, 16, 8, 256, 512),
        ),
        obj_blocks=(
            DiscBlockSpec(4, 32, 16, 64, 128),
            DiscBlockSpec(3, 16, 8, 128, 256),
            DiscBlockSpec(2, 8, 4, 256, 256),
            DiscBlockSpec(1, 4, 2, 256, 256),
        ),
        branch_resolution=32,
        layout_channels=layout_channels,
    )


def tiny_discriminator_config(layout_channels: int = 12, width: int = 16) -> DiscriminatorConfig:
    """Reduced config matching the 64x64 tiny generator."""
    return DiscriminatorConfig(
        adv_blocks=(
            DiscBlockSpec(3, 64, 32, 3, width),
            DiscBlockSpec(2, 32, 16, width, width * 2),
            DiscBlockSpec(1, 16, 8, width * 2, width * 4),
        ),
        obj_blocks=(
            DiscBlockSpec(2, 16, 8, width, width * 2),
            DiscBlockSpec(1, 8, 4, width * 2, width * 2),
        ),
        branch_resolution=16,
        layout_channels=layout_channels,
    )


class DownBlock(nn.Module):
    """k4-s2 downsampling conv followed by a k3 channel-mixing conv."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.down = nn.Conv2d(in_channels, in_channels, 4, stride=2, padding=1)
        self.down_bn = nn.BatchNorm2d(in_channels)
        self.mix = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.mix_bn = nn.BatchNorm2d(out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.down_bn(self.down(x)), 0.1)
        return F.leaky_relu(self.mix_bn(self.mix(x)), 0.1)


class Discriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        in_ch = config.image_channels * (2 if config.condition_on_background else 1)
        first = config.adv_blocks[0]
        if first.in_channels != config.image_channels:
            raise ShapeError(f"first adversarial block must take {config.image_channels} channels")
        blocks = [DownBlock(in_ch, first.out_channels)]
        blocks += [DownBlock(b.in_channels, b.out_channels) for b in config.adv_blocks[1:]]
        self.adv_blocks = nn.ModuleList(blocks)

        last = config.adv_blocks[-1]
        self.adv_head = nn.Conv2d(last.out_channels, 1, 4)

        k = config.layout_channels
        self.branch_proj = nn.Conv2d(config.branch_channels, config.obj_blocks[0].in_channels, 1)
        self.obj_convs = nn.ModuleList(
            nn.Conv2d(b.in_channels + k, b.out_channels, 4, stride=2, padding=1) for b in config.obj_blocks
        )
        self.obj_bns = nn.ModuleList(nn.BatchNorm2d(b.out_channels) for b in config.obj_blocks)
        last_obj = config.obj_blocks[-1]
        self.obj_head = nn.Conv2d(last_obj.out_channels, 1, last_obj.out_resolution)

    def adv_forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Realism logit plus the branch feature map for the layout head."""
        cfg = self.config
        if image.shape[-1] != cfg.input_resolution or image.shape[-2] != cfg.input_resolution:
            raise ShapeError(f"input must be {cfg.input_resolution}^2, got {tuple(image.shape[-2:])}")
        x = image
        branch = None
        for spec, block in zip(cfg.adv_blocks, self.adv_blocks):
            x = block(x)
            if spec.out_resolution == cfg.branch_resolution:
                branch = x
        x = F.adaptive_avg_pool2d(x, 4)
        logit = self.adv_head(x).flatten(1).squeeze(1)
        return logit, branch

    def obj_forward(self, branch: torch.Tensor, layout_pyramid: dict[int, torch.Tensor]) -> torch.Tensor:
        """Layout-conformance logit from the branch feature and the layout pyramid."""
        cfg = self.config
        missing = [r for r in cfg.layout_scales if r not in layout_pyramid]
        if missing:
            raise ShapeError(f"layout pyramid missing scales {missing}")
        x = self.branch_proj(branch)
        for spec, conv, bn in zip(cfg.obj_blocks, self.obj_convs, self.obj_bns):
            level = layout_pyramid[spec.in_resolution]
            if level.shape[-1] != spec.in_resolution:
                raise ShapeError(f"pyramid level for scale {spec.in_resolution} has size {level.shape[-1]}")
            x = torch.cat([x, level], dim=1)
            x = F.leaky_relu(bn(conv(x)), 0.1)
        return self.obj_head(x).flatten(1).squeeze(1)

    def forward(self, image: torch.Tensor, layout_pyramid: dict[int, torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
        adv_logit, branch = self.adv_forward(image)
        return adv_logit, self.obj_forward(branch, layout_pyramid)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def layout_pyramid_tensors(layout: torch.Tensor, scales: list[int]) -> dict[int, torch.Tensor]:
    """Average-pool a full-resolution layout tensor to each requested scale."""
    return {r: F.adaptive_avg_pool2d(layout, r) for r in scales}
