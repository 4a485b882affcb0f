"""Generative quality metrics over a pluggable feature embedder.

Class-wise FID (mFID) is the unweighted mean of the per-class Frechet
distances between embedded real and fake samples. Density and coverage
are k-NN-ball fidelity/diversity scores over the same features. The
default embedder is a small frozen random-projection conv net, so the
whole metric stack runs without pretrained weights; an adapter hook for
Inception-V3 pooled features is provided for full-scale use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
from scipy.spatial.distance import cdist


@dataclass
class GaussianSummary:
    """Mean and covariance of a feature sample."""

    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d), symmetric PSD up to tolerance
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"need >= 2 samples, got {self.count}")
        if not np.all(np.isfinite(self.cov)) or not np.all(np.isfinite(self.mean)):
            raise ValueError("non-finite moments")
        if np.abs(self.cov - self.cov.T).max() > 1e-8:
            raise ValueError("covariance is not symmetric")

    @staticmethod
    def from_features(features: np.ndarray) -> "GaussianSummary":
        """Unbiased moments of an (N, d) feature matrix."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError("features must be (N >= 2, d)")
        mean = features.mean(axis=0)
        cov = np.cov(features, rowvar=False)
        cov = np.atleast_2d(cov)
        cov = (cov + cov.T) / 2
        return GaussianSummary(mean, cov, features.shape[0])


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues clamped to zero."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """Frechet distance between two Gaussian summaries.

    ``||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2))``, with
    the cross term evaluated through the eigendecomposition of the
    symmetrized product. Tiny negative results (roundoff) clamp to zero.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError(
            f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}"
        )
    diff = a.mean - b.mean
    sqrt_a = _sqrtm_psd(a.cov)
    cross = _sqrtm_psd(sqrt_a @ b.cov @ sqrt_a)
    value = float(diff @ diff + np.trace(a.cov + b.cov - 2.0 * cross))
    if value < -1e-6:
        raise ValueError(f"frechet distance is significantly negative: {value}")
    return max(value, 0.0)


@dataclass
class FeatureEmbedder:
    """Deterministic map from image batches to (B, dim) features.

    ``fn`` takes channel-last float images in [-1, 1] as a numpy array.
    """

    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, images: np.ndarray) -> np.ndarray:
        feats = self.fn(np.asarray(images, dtype=np.float32))
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise ValueError(
                f"embedder {self.name} returned shape {feats.shape}, "
                f"expected (B, {self.dim})"
            )
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"embedder {self.name} produced non-finite features")
        return feats


def make_stub_embedder(dim: int = 64, seed: int = 0) -> FeatureEmbedder:
    """Small frozen random-projection conv net for weight-free evaluation."""
    generator = torch.Generator().manual_seed(seed)
    net = nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(16, 32, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(32, 64, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(64, dim),
    )
    with torch.no_grad():
        for p in net.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=generator)
            else:
                p.zero_()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)

    @torch.no_grad()
    def embed(images: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(images).permute(0, 3, 1, 2)
        chunks = [net(x[i : i + 64]).numpy() for i in range(0, len(x), 64)]
        return np.concatenate(chunks, axis=0)

    return FeatureEmbedder(name=f"stub{dim}", dim=dim, fn=embed)


def make_inception_embedder(weights: str = "DEFAULT") -> FeatureEmbedder:
    """Adapter for Inception-V3 pooled features (optional integration).

    Requires torchvision with pretrained weights available locally; not
    used by the test suite.
    """
    try:
        from torchvision.models import inception_v3
    except ImportError as exc:  # pragma: no cover - optional path
        raise RuntimeError(
            "torchvision is required for the Inception embedder"
        ) from exc
    net = inception_v3(weights=weights, aux_logits=True)
    net.fc = nn.Identity()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)

    @torch.no_grad()
    def embed(images: np.ndarray) -> np.ndarray:  # pragma: no cover
        x = torch.from_numpy(images).permute(0, 3, 1, 2)
        x = nn.functional.interpolate(
            x, size=(299, 299), mode="bilinear", align_corners=False
        )
        chunks = [net(x[i : i + 32]).numpy() for i in range(0, len(x), 32)]
        return np.concatenate(chunks, axis=0)

    return FeatureEmbedder(name="inception_v3_pool", dim=2048, fn=embed)


def mfid(
    real_sets: dict[int, np.ndarray],
    fake_sets: dict[int, np.ndarray],
    embedder: FeatureEmbedder,
) -> tuple[float, dict[int, float]]:
    """Class-wise FID over embedded features, averaged without weighting.

    Classes with fewer than two real or fake samples are skipped with a
    warning and excluded from the mean.

    Args:
        real_sets: class id -> (N, H, W, 3) real images.
        fake_sets: class id -> (M, H, W, 3) fake images.
        embedder: feature embedder shared by both sides.

    Returns:
        (mFID, per-class FID dict).
    """
    per_class: dict[int, float] = {}
    for cls, real in sorted(real_sets.items()):
        fake = fake_sets.get(cls)
        if fake is None or len(fake) < 2 or len(real) < 2:
            warnings.warn(f"class {cls}: too few samples, skipped from mFID")
            continue
        summary_r = GaussianSummary.from_features(embedder(real))
        summary_f = GaussianSummary.from_features(embedder(fake))
        per_class[cls] = frechet_distance(summary_r, summary_f)
    if not per_class:
        raise ValueError("no class had enough samples for FID")
    return float(np.mean(list(per_class.values()))), per_class


def density_coverage(
    real_feats: np.ndarray, fake_feats: np.ndarray, k: int = 5
) -> tuple[float, float]:
    """Density and coverage from k-NN balls around the real features.

    Each real point gets a ball whose radius is the distance to its k-th
    nearest real neighbour (self excluded). Density counts fake points per
    ball, normalized by ``k * n_fake``; coverage is the fraction of real
    balls containing at least one fake point.
    """
    real_feats = np.asarray(real_feats, dtype=np.float64)
    fake_feats = np.asarray(fake_feats, dtype=np.float64)
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if len(real_feats) < k + 1:
        raise ValueError(f"need at least k+1={k + 1} real features")
    real_dists = cdist(real_feats, real_feats)
    np.fill_diagonal(real_dists, np.inf)
    radii = np.sort(real_dists, axis=1)[:, k - 1]

    cross = cdist(fake_feats, real_feats)  # (M, N)
    inside = cross <= radii[None, :]
    density = float(inside.sum()) / (k * len(fake_feats))
    coverage = float(inside.any(axis=0).mean())
    return density, coverage


def protocol_sample(
    labels: np.ndarray,
    target_class: int,
    n_refs: int = 5,
    sources_per_class: int = 18,
    rng: np.random.Generator | None = None,
) -> list[tuple[int, int]]:
    """Source/reference index pairs for translating into ``target_class``.

    Draws ``sources_per_class`` source images from every class except the
    target (with replacement, and a warning, when a class is too small) and
    ``n_refs`` references per source from the target class, giving
    ``sources_per_class * (n_classes - 1) * n_refs`` pairs.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = rng or np.random.default_rng(0)
    classes = np.unique(labels)
    if target_class not in classes:
        raise ValueError(f"target class {target_class} not present")
    target_pool = np.flatnonzero(labels == target_class)

    pairs: list[tuple[int, int]] = []
    for cls in classes:
        if cls == target_class:
            continue
        pool = np.flatnonzero(labels == cls)
        if len(pool) < sources_per_class:
            warnings.warn(
                f"class {cls} has {len(pool)} < {sources_per_class} samples; "
                "sampling sources with replacement"
            )
            sources = rng.choice(pool, size=sources_per_class, replace=True)
        else:
            sources = rng.choice(pool, size=sources_per_class, replace=False)
        for src in sources:
            replace = len(target_pool) < n_refs
            refs = rng.choice(target_pool, size=n_refs, replace=replace)
            pairs.extend((int(src), int(ref)) for ref in refs)
    return pairs


def best_k_mean(values: list[float], k: int = 5) -> float:
    """Mean of the k best (smallest) values; reporting rule for mFID sweeps."""
    if not values:
        raise ValueError("no values to aggregate")
    return float(np.mean(sorted(values)[:k]))


def write_metric_report(
    metrics: dict[str, float | None], table_path: str | Path, kv_path: str | Path
) -> None:
    """Emit a human-readable table and a machine-readable key=value file."""
    width = max(len(k) for k in metrics)
    lines = [
        f"{key.ljust(width)}  {'n/a' if value is None else f'{value:.6f}'}"
        for key, value in metrics.items()
    ]
    Path(table_path).write_text("\n".join(lines) + "\n")
    kv_lines = [
        f"{key}={'nan' if value is None else repr(float(value))}"
        for key, value in metrics.items()
    ]
    Path(kv_path).write_text("\n".join(kv_lines) + "\n")
