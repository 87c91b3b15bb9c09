import numpy as np
import pytest
import torch

from scenedecor.errors import ShapeError
from scenedecor.generator import (
    Generator,
    GeneratorConfig,
    GenBlockSpec,
    SkipLayerExcitation,
    SpadeNorm,
    SpadeResidual,
    default_generator_config,
    tiny_generator_config,
)

TABLE_SHAPES = {
    "block2": (512, 8, 8),
    "block3": (512, 16, 16),
    "block4": (256, 32, 32),
    "block5": (128, 64, 64),
    "block6": (64, 128, 128),
    "block7": (32, 256, 256),
}

# Pinned at first implementation; any architecture change must update this.
GOLDEN_PARAM_COUNT = 20_004_315


def full_inputs(batch=1, seed=0):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(batch, 3, 256, 256, generator=g) * 2 - 1
    layout = torch.rand(batch, 12, 256, 256, generator=g)
    z = torch.randn(batch, 256, generator=g)
    return x, layout, z


class TestSpade:
    def test_zero_layout_and_zeroed_output_stage_reduces_to_normalization(self):
        torch.manual_seed(0)
        spade = SpadeNorm(8, 4)
        torch.nn.init.zeros_(spade.gamma.weight)
        torch.nn.init.zeros_(spade.gamma.bias)
        torch.nn.init.zeros_(spade.beta.weight)
        torch.nn.init.zeros_(spade.beta.bias)
        x = torch.randn(2, 8, 16, 16)
        layout = torch.zeros(2, 4, 16, 16)
        out = spade(x, layout)
        torch.testing.assert_close(out, spade.norm(x))

        res = SpadeResidual(8, 4)
        for s in (res.spade1, res.spade2):
            torch.nn.init.zeros_(s.gamma.weight)
            torch.nn.init.zeros_(s.gamma.bias)
            torch.nn.init.zeros_(s.beta.weight)
            torch.nn.init.zeros_(s.beta.bias)
        out = res(x, layout)
        expected = x + res.spade2.norm(torch.relu(res.spade1.norm(x)))
        torch.testing.assert_close(out, expected)

    def test_shape_preserved(self):
        spade = SpadeResidual(6, 3)
        out = spade(torch.randn(1, 6, 8, 8), torch.rand(1, 3, 8, 8))
        assert out.shape == (1, 6, 8, 8)

    def test_modulation_is_spatially_local(self):
        torch.manual_seed(1)
        spade = SpadeNorm(4, 2).eval()
        x = torch.randn(1, 4, 16, 16)
        a = torch.rand(1, 2, 16, 16)
        b = a.clone()
        b[0, 0, 8, 8] += 1.0
        delta = (spade(x, a) - spade(x, b)).abs().sum(dim=(0, 1))
        changed = torch.nonzero(delta > 1e-9)
        # two k3 stages -> receptive field radius 2 around (8, 8)
        assert changed.numel() > 0
        assert (changed - torch.tensor([8, 8])).abs().max() <= 2

    def test_spatial_mismatch_rejected(self):
        spade = SpadeNorm(4, 2)
        with pytest.raises(ShapeError):
            spade(torch.randn(1, 4, 8, 8), torch.rand(1, 2, 16, 16))


class TestSkipLayerExcitation:
    def test_output_strictly_in_unit_interval(self):
        torch.manual_seed(0)
        sle = SkipLayerExcitation(32, 16)
        v = sle(torch.randn(2, 32, 8, 8))
        assert v.shape == (2, 16, 1, 1)
        assert torch.all(v > 0) and torch.all(v < 1)

    def test_zero_source_with_zero_bias_gives_half(self):
        sle = SkipLayerExcitation(8, 4)
        torch.nn.init.zeros_(sle.collapse.bias)
        torch.nn.init.zeros_(sle.project.bias)
        v = sle(torch.zeros(1, 8, 8, 8))
        torch.testing.assert_close(v, torch.full((1, 4, 1, 1), 0.5))

    def test_vector_length_matches_destination(self):
        cfg = default_generator_config()
        gen = Generator(cfg)
        assert gen.sle["6"].project.out_channels == 64
        assert gen.sle["7"].project.out_channels == 32


class TestGeneratorForward:
    def test_output_contract(self):
        torch.manual_seed(0)
        gen = Generator(default_generator_config()).eval()
        x, layout, z = full_inputs()
        with torch.no_grad():
            out = gen(x, layout, z)
        assert out.shape == (1, 3, 256, 256)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_table_shapes_and_param_count(self):
        torch.manual_seed(0)
        gen = Generator(default_generator_config()).eval()
        x, layout, z = full_inputs()
        with torch.no_grad():
            feats = gen.forward_features(x, layout, z)
        for name, shape in TABLE_SHAPES.items():
            assert tuple(feats[name].shape[1:]) == shape, name
        assert gen.parameter_count() == GOLDEN_PARAM_COUNT

    def test_sle_identity_gate(self):
        torch.manual_seed(0)
        cfg = tiny_generator_config()
        gen = Generator(cfg).eval()
        spec = cfg.blocks[-1]
        block = gen.blocks[-1]
        feat = torch.randn(1, spec.in_channels, spec.in_resolution, spec.in_resolution)
        lay = torch.rand(1, cfg.layout_channels, spec.in_resolution, spec.in_resolution)
        bg = torch.rand(1, 3, spec.out_resolution, spec.out_resolution)
        with torch.no_grad():
            plain = block(feat, lay, bg, None)
            gated = block(feat, lay, bg, torch.ones(1, spec.out_channels, 1, 1))
        torch.testing.assert_close(plain, gated)

    def test_latent_changes_output(self):
        torch.manual_seed(0)
        gen = Generator(tiny_generator_config()).eval()
        x = torch.rand(1, 3, 64, 64) * 2 - 1
        layout = torch.rand(1, 12, 64, 64)
        g = torch.Generator().manual_seed(1)
        z1 = torch.randn(1, 16, generator=g)
        z2 = torch.randn(1, 16, generator=g)
        with torch.no_grad():
            a, b = gen(x, layout, z1), gen(x, layout, z2)
        assert not torch.allclose(a, b)

    def test_background_conditioning_is_live(self):
        torch.manual_seed(0)
        gen = Generator(tiny_generator_config()).eval()
        x = torch.rand(1, 3, 64, 64) * 2 - 1
        layout = torch.rand(1, 12, 64, 64)
        z = torch.zeros(1, 16)
        x2 = x.clone()
        x2[0, 0, 32, 32] += 0.5
        with torch.no_grad():
            assert not torch.allclose(gen(x, layout, z), gen(x2, layout, z))

    def test_layout_conditioning_is_live(self):
        torch.manual_seed(0)
        gen = Generator(tiny_generator_config()).eval()
        x = torch.rand(1, 3, 64, 64) * 2 - 1
        layout = torch.rand(1, 12, 64, 64)
        z = torch.zeros(1, 16)
        with torch.no_grad():
            assert not torch.allclose(gen(x, layout, z), gen(x, torch.zeros_like(layout), z))

    def test_determinism(self):
        torch.manual_seed(0)
        gen = Generator(tiny_generator_config()).eval()
        x = torch.rand(2, 3, 64, 64) * 2 - 1
        layout = torch.rand(2, 12, 64, 64)
        z = torch.randn(2, 16)
        with torch.no_grad():
            a, b = gen(x, layout, z), gen(x, layout, z)
        torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_wrong_layout_channels_rejected(self):
        gen = Generator(tiny_generator_config())
        with pytest.raises(ShapeError):
            gen(torch.rand(1, 3, 64, 64), torch.rand(1, 5, 64, 64), torch.zeros(1, 16))

    def test_config_validation(self):
        with pytest.raises(ShapeError):
            GeneratorConfig(blocks=(GenBlockSpec(2, 4, 9, 12, 32),))
        with pytest.raises(ShapeError):
            GeneratorConfig(
                blocks=(GenBlockSpec(2, 4, 8, 12, 32), GenBlockSpec(3, 8, 16, 32, 16, sle_source=9)),
            )

    def test_gradients_reach_all_parameters(self):
        torch.manual_seed(0)
        gen = Generator(tiny_generator_config())
        x = torch.rand(2, 3, 64, 64) * 2 - 1
        layout = torch.rand(2, 12, 64, 64)
        z = torch.randn(2, 16)
        gen(x, layout, z).square().mean().backward()
        missing = [n for n, p in gen.named_parameters() if p.grad is None or not torch.isfinite(p.grad).all()]
        assert missing == []
