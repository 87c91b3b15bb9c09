import math

import numpy as np
import pytest

from scenedecor.errors import MetricError
from scenedecor.metrics import (
    FeatureSet,
    ToyExtractor,
    extract_features,
    fid,
    kid,
    metric_report,
    _sqrtm_psd,
)


def feats(arr, source="real", extractor_id="toy-gap3"):
    return FeatureSet(features=np.asarray(arr, dtype=np.float64), source=source, extractor_id=extractor_id)


class TestSqrtm:
    def test_diagonal(self):
        m = np.diag([4.0, 9.0, 16.0])
        np.testing.assert_allclose(_sqrtm_psd(m), np.diag([2.0, 3.0, 4.0]), atol=1e-12)

    def test_root_squares_back(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(5, 5))
        m = a @ a.T
        r = _sqrtm_psd(m)
        np.testing.assert_allclose(r @ r, m, atol=1e-9)

    def test_rejects_indefinite(self):
        with pytest.raises(MetricError):
            _sqrtm_psd(np.diag([1.0, -1.0]))

    def test_small_negative_eigenvalues_clamped(self):
        m = np.diag([1.0, -1e-9])
        r = _sqrtm_psd(m)
        assert r[1, 1] == 0.0


class TestFid:
    def test_identical_sets_give_zero(self):
        rng = np.random.default_rng(0)
        a = feats(rng.normal(size=(64, 3)))
        b = feats(a.features.copy(), source="generated")
        assert abs(fid(a, b)) <= 1e-6

    def test_mean_shift_closed_form(self):
        # equal covariances: FID reduces to the squared mean distance
        rng = np.random.default_rng(1)
        base = rng.normal(size=(200, 4))
        d = np.array([1.0, -2.0, 0.5, 3.0])
        a = feats(base)
        b = feats(base + d, source="generated")
        assert fid(a, b) == pytest.approx(float(d @ d), abs=1e-6)

    def test_scalar_gaussians(self):
        # 1-D features: FID = (mu_a-mu_b)^2 + (s_a - s_b)^2
        rng = np.random.default_rng(2)
        x = rng.normal(size=(5000, 1))
        a = feats(x)
        b = feats(3.0 * x + 2.0, source="generated")
        sa, sb = x.std(ddof=1), (3.0 * x).std(ddof=1)
        expected = (x.mean() - (3 * x.mean() + 2.0)) ** 2 + (sa - sb) ** 2
        assert fid(a, b) == pytest.approx(float(expected), rel=1e-9)

    def test_needs_two_samples(self):
        with pytest.raises(MetricError):
            fid(feats([[1.0, 2.0]]), feats([[1.0, 2.0], [3.0, 4.0]]))

    def test_mismatched_extractors_rejected(self):
        a = feats(np.zeros((4, 3)))
        b = FeatureSet(np.zeros((4, 3)), "generated", "other")
        with pytest.raises(MetricError):
            fid(a, b)


def brute_kid_3pt(x, y):
    d = x.shape[1]

    def k(u, v):
        return (float(u @ v) / d + 1.0) ** 3

    m = len(x)
    sum_xx = sum(k(x[i], x[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    sum_yy = sum(k(y[i], y[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    sum_xy = sum(k(x[i], y[j]) for i in range(m) for j in range(m)) / (m * m)
    return sum_xx + sum_yy - 2 * sum_xy


class TestKid:
    def test_matches_brute_force_on_three_points(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 2))
        y = rng.normal(size=(3, 2))
        got = kid(feats(x), feats(y, source="generated"))
        assert got == pytest.approx(brute_kid_3pt(x, y), abs=1e-9)

    def test_identical_sets_closed_form(self):
        # equal sets: the unbiased estimator reduces to
        # 2(S - T)/(m(m-1)) - 2S/m^2 with S = sum K, T = trace K, and is <= 0
        rng = np.random.default_rng(1)
        x = rng.normal(size=(50, 3))
        m, d = x.shape
        k = (x @ x.T / d + 1.0) ** 3
        s, t = k.sum(), np.trace(k)
        expected = 2 * (s - t) / (m * (m - 1)) - 2 * s / m**2
        v = kid(feats(x), feats(x.copy(), source="generated"))
        assert v == pytest.approx(float(expected), abs=1e-12)
        assert v <= 0.0

    def test_subset_averaging_deterministic(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 3))
        y = rng.normal(loc=0.5, size=(40, 3))
        a = kid(feats(x), feats(y, source="generated"), subset_size=10, n_subsets=20, seed=5)
        b = kid(feats(x), feats(y, source="generated"), subset_size=10, n_subsets=20, seed=5)
        assert a == b
        c = kid(feats(x), feats(y, source="generated"), subset_size=10, n_subsets=20, seed=6)
        assert a != c

    def test_shifted_sets_positive(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 3))
        y = rng.normal(loc=2.0, size=(60, 3))
        assert kid(feats(x), feats(y, source="generated")) > 0.0


class TestReport:
    def test_x1000_convention(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 3))
        y = rng.normal(loc=1.0, size=(30, 3))
        report = metric_report(feats(x), feats(y, source="generated"))
        assert report["kid_x1000"] == pytest.approx(report["kid"] * 1000.0, rel=1e-12)
        assert report["n_real"] == 30 and report["n_fake"] == 30
        assert report["extractor_id"] == "toy-gap3"
        assert math.isfinite(report["fid"])


class TestExtraction:
    def test_toy_extractor_is_channel_mean(self):
        images = np.zeros((2, 3, 4, 4), dtype=np.float32)
        images[0, 0] = 1.0
        images[1, 2] = -0.5
        fs = extract_features(images, ToyExtractor(), source="real")
        np.testing.assert_allclose(fs.features, [[1.0, 0.0, 0.0], [0.0, 0.0, -0.5]])
        assert fs.extractor_id == "toy-gap3"

    def test_feature_set_must_be_2d(self):
        with pytest.raises(MetricError):
            FeatureSet(np.zeros((2, 3, 4)), "real", "toy-gap3")
