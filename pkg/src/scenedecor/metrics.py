"""Distribution distances between real and generated image sets.

FID is the Fréchet distance between Gaussian fits of embedding sets; KID is
the unbiased squared MMD with a degree-3 polynomial kernel, conventionally
reported multiplied by 1000. Embedding extraction is pluggable so tests run
on a tiny deterministic extractor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import MetricError


class FeatureExtractor(Protocol):
    extractor_id: str
    dim: int

    def __call__(self, images: np.ndarray) -> np.ndarray:
        """(N, 3, H, W) in [-1, 1] -> (N, dim) float64."""
        ...


class ToyExtractor:
    """Global average pool per channel; D=3. Deterministic, for tests."""

    extractor_id = "toy-gap3"
    dim = 3

    def __call__(self, images: np.ndarray) -> np.ndarray:
        return np.asarray(images, dtype=np.float64).mean(axis=(2, 3))


class InceptionExtractor:
    """Standard 2048-D inception embedding via torchvision, loaded lazily."""

    extractor_id = "inception-v3-torchvision-2048"
    dim = 2048

    def __init__(self):
        try:
            import torchvision  # noqa: F401
        except ImportError as exc:
            raise MetricError(
                "inception embeddings need torchvision: pip install torchvision, "
                "then rerun (first use downloads the pretrained weights)"
            ) from exc
        import torch
        from torchvision.models import Inception_V3_Weights, inception_v3

        try:
            self._model = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:  # weight download blocked / offline
            raise MetricError(
                f"could not provision inception weights ({exc}); download them on a "
                "connected machine or point TORCH_HOME at a cache containing them"
            ) from exc
        self._model.fc = torch.nn.Identity()
        self._model.eval()

    def __call__(self, images: np.ndarray) -> np.ndarray:
        import torch
        import torch.nn.functional as F

        with torch.no_grad():
            batch = torch.from_numpy(np.asarray(images, dtype=np.float32))
            batch = F.interpolate(batch, size=(299, 299), mode="bilinear", align_corners=False)
            return self._model(batch).double().numpy()


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray  # (N, D) float64
    source: str  # real | generated
    extractor_id: str

    def __post_init__(self):
        if self.features.ndim != 2:
            raise MetricError(f"feature matrix must be 2-D, got shape {self.features.shape}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def extract_features(images: np.ndarray, extractor: FeatureExtractor, source: str = "generated") -> FeatureSet:
    feats = np.asarray(extractor(images), dtype=np.float64)
    if feats.shape != (len(images), extractor.dim):
        raise MetricError(f"extractor returned shape {feats.shape}, expected ({len(images)}, {extractor.dim})")
    return FeatureSet(features=feats, source=source, extractor_id=extractor.extractor_id)


def _check_pair(a: FeatureSet, b: FeatureSet):
    if a.dim != b.dim:
        raise MetricError(f"feature dims disagree: {a.dim} vs {b.dim}")
    if a.extractor_id != b.extractor_id:
        raise MetricError(f"extractors disagree: {a.extractor_id} vs {b.extractor_id}")


def _sqrtm_psd(mat: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Symmetric PSD square root via eigen-decomposition with clamping at 0."""
    sym = (mat + mat.T) / 2
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < -tol * max(1.0, abs(vals.max())):
        raise MetricError(
            f"matrix not PSD after regularization: min eigenvalue {vals.min():.3e}, max {vals.max():.3e}"
        )
    vals = np.clip(vals, 0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})."""
    _check_pair(a, b)
    if a.n < 2 or b.n < 2:
        raise MetricError("FID needs at least 2 samples per set for a covariance")
    mu_a, mu_b = a.features.mean(axis=0), b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False).reshape(a.dim, a.dim)
    cov_b = np.cov(b.features, rowvar=False).reshape(b.dim, b.dim)
    root_a = _sqrtm_psd(cov_a)
    cross = _sqrtm_psd(root_a @ cov_b @ root_a)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(cross))
    return max(value, 0.0)


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    m, n = len(x), len(y)
    kxx = _poly_kernel(x, x)
    kyy = _poly_kernel(y, y)
    kxy = _poly_kernel(x, y)
    sum_xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    sum_yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(sum_xx + sum_yy - 2 * kxy.mean())


def kid(
    a: FeatureSet,
    b: FeatureSet,
    subset_size: int = 1000,
    n_subsets: int = 100,
    seed: int = 0,
) -> float:
    """Mean unbiased squared MMD over random subsets (raw scale, not x1000)."""
    _check_pair(a, b)
    if subset_size < 2:
        raise MetricError("subset_size must be >= 2")
    m = min(subset_size, a.n, b.n)
    if m < 2:
        raise MetricError("sets too small for KID")
    if m >= a.n and m >= b.n:
        return _mmd2_unbiased(a.features, b.features)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_subsets):
        xa = a.features[rng.choice(a.n, m, replace=False)]
        xb = b.features[rng.choice(b.n, m, replace=False)]
        values.append(_mmd2_unbiased(xa, xb))
    return float(np.mean(values))


def metric_report(
    real: FeatureSet,
    generated: FeatureSet,
    subset_size: int = 1000,
    n_subsets: int = 100,
    seed: int = 0,
) -> dict:
    """The JSON report emitted by the evaluate command."""
    fid_value = fid(real, generated)
    kid_value = kid(real, generated, subset_size=subset_size, n_subsets=n_subsets, seed=seed)
    return {
        "fid": fid_value,
        "kid": kid_value,
        "kid_x1000": kid_value * 1000.0,
        "n_real": real.n,
        "n_fake": generated.n,
        "extractor_id": real.extractor_id,
    }
