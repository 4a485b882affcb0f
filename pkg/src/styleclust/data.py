"""Dataset ingestion, paired-view augmentation, and synthetic data.

Images are stored channel-last float32 in [-1, 1]. Folder datasets follow
the ``root/<class_name>/*.png`` layout (class subdirectories mapped to
label indices alphabetically) or a flat unlabeled ``root/*.png`` layout.

The synthetic generator produces multi-domain images whose domain is
recoverable by construction: each domain owns a disjoint hue band and a
stripe frequency (the style factors), while shape type, position and scale
vary independently of the domain (the content factors).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigError, DatasetError

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass
class ImageDataset:
    """In-memory image collection with optional ground-truth domain labels."""

    images: np.ndarray  # (N, H, W, 3) float32 in [-1, 1]
    labels: np.ndarray | None = None  # (N,) int64
    class_names: list[str] | None = None

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise DatasetError(
                f"images must be (N, H, W, 3), got {self.images.shape}"
            )
        if self.labels is not None and len(self.labels) != len(self.images):
            raise DatasetError("labels length does not match image count")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[1]

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            raise DatasetError("dataset has no labels")
        return int(self.labels.max()) + 1

    def subset(self, indices: np.ndarray) -> "ImageDataset":
        labels = None if self.labels is None else self.labels[indices]
        return ImageDataset(self.images[indices], labels, self.class_names)

    def without_labels(self) -> "ImageDataset":
        return ImageDataset(self.images, None, None)


def load_image_folder(root: str | Path, resolution: int) -> ImageDataset:
    """Load a folder dataset, resizing everything to ``resolution``.

    Class subdirectories (if any) become label indices in alphabetical
    order; a flat folder yields an unlabeled dataset. Undecodable files are
    skipped with a warning; an empty or fully undecodable folder is an
    error. Ordering is lexicographic, so repeated loads are identical.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    if subdirs:
        sources = [
            (label, d.name, f)
            for label, d in enumerate(subdirs)
            for f in sorted(d.iterdir())
            if f.suffix.lower() in IMAGE_EXTENSIONS
        ]
        class_names = [d.name for d in subdirs]
    else:
        sources = [
            (None, None, f)
            for f in sorted(root.iterdir())
            if f.suffix.lower() in IMAGE_EXTENSIONS
        ]
        class_names = None
    if not sources:
        raise DatasetError(f"no image files under {root}")

    images, labels = [], []
    for label, _, path in sources:
        raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if raw is None:
            warnings.warn(f"skipping undecodable image {path}")
            continue
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
        if rgb.shape[:2] != (resolution, resolution):
            rgb = cv2.resize(
                rgb, (resolution, resolution), interpolation=cv2.INTER_AREA
            )
        images.append(rgb.astype(np.float32) / 127.5 - 1.0)
        labels.append(label)
    if not images:
        raise DatasetError(f"all images under {root} failed to decode")

    stacked = np.stack(images)
    if class_names is None:
        return ImageDataset(stacked, None, None)
    return ImageDataset(stacked, np.array(labels, dtype=np.int64), class_names)


def save_image_folder(dataset: ImageDataset, root: str | Path) -> None:
    """Write a dataset back as 8-bit PNGs in folder layout."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(len(dataset)):
        if dataset.labels is not None:
            label = int(dataset.labels[i])
            name = (
                dataset.class_names[label]
                if dataset.class_names is not None
                else f"domain_{label}"
            )
            directory = root / name
        else:
            directory = root
        directory.mkdir(parents=True, exist_ok=True)
        cv2.imwrite(str(directory / f"{i:05d}.png"), to_uint8_bgr(dataset.images[i]))


def to_uint8_bgr(image: np.ndarray) -> np.ndarray:
    """De-normalize a [-1, 1] RGB image to uint8 BGR for cv2 output."""
    u8 = np.clip((image + 1.0) * 127.5, 0, 255).round().astype(np.uint8)
    return cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)


@dataclass
class AugmentParams:
    """One draw of the paired-view augmentation."""

    top: int
    left: int
    height: int
    width: int
    flip: bool
    angle_deg: float

    @staticmethod
    def identity(resolution: int) -> "AugmentParams":
        return AugmentParams(0, 0, resolution, resolution, False, 0.0)


def sample_augment_params(
    rng: np.random.Generator, height: int, width: int
) -> AugmentParams:
    """Draw crop box (area U[0.2, 1], aspect U[3/4, 4/3]), flip, rotation."""
    area = rng.uniform(0.2, 1.0) * height * width
    aspect = rng.uniform(0.75, 4.0 / 3.0)
    w = int(np.clip(round(math.sqrt(area * aspect)), 1, width))
    h = int(np.clip(round(math.sqrt(area / aspect)), 1, height))
    left = int(rng.integers(0, width - w + 1))
    top = int(rng.integers(0, height - h + 1))
    flip = bool(rng.random() < 0.5)
    angle = float(rng.uniform(-10.0, 10.0))
    return AugmentParams(top, left, h, w, flip, angle)


def apply_augment(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Crop-resize, flip, rotate (reflect padding); output matches input size."""
    height, width = image.shape[:2]
    crop = image[
        params.top : params.top + params.height,
        params.left : params.left + params.width,
    ]
    out = cv2.resize(crop, (width, height), interpolation=cv2.INTER_LINEAR)
    if params.flip:
        out = np.ascontiguousarray(out[:, ::-1])
    if params.angle_deg != 0.0:
        center = ((width - 1) / 2.0, (height - 1) / 2.0)
        matrix = cv2.getRotationMatrix2D(center, params.angle_deg, 1.0)
        out = cv2.warpAffine(
            out,
            matrix,
            (width, height),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_REFLECT_101,
        )
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random paired-view augmentation of one [-1, 1] image."""
    params = sample_augment_params(rng, image.shape[0], image.shape[1])
    return apply_augment(image, params)


def augment_batch(batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply an independent augmentation draw to each image of a batch."""
    return np.stack([augment(img, rng) for img in batch])


def split_semi_supervised(
    dataset: ImageDataset, gamma_label: float, seed: int
) -> tuple[ImageDataset, ImageDataset]:
    """Stratified split into (labeled, unlabeled) with ratio ``gamma_label``.

    Every class keeps at least one labeled sample whenever gamma > 0; the
    unlabeled half has its labels stripped. The two halves are disjoint and
    exhaustive, and the split is reproducible under ``seed``.
    """
    if not 0.0 <= gamma_label <= 1.0:
        raise ConfigError(f"gamma_label must be in [0, 1], got {gamma_label}")
    if gamma_label > 0 and dataset.labels is None:
        raise DatasetError("semi-supervised split requires ground-truth labels")
    if gamma_label == 0.0:
        empty = np.array([], dtype=np.int64)
        return dataset.subset(empty), dataset.without_labels()

    rng = np.random.default_rng(seed)
    labeled_idx = []
    unlabeled_idx = []
    for cls in np.unique(dataset.labels):
        members = np.flatnonzero(dataset.labels == cls)
        members = rng.permutation(members)
        n_lab = int(round(gamma_label * len(members)))
        n_lab = max(1, n_lab) if gamma_label > 0 else 0
        labeled_idx.append(members[:n_lab])
        unlabeled_idx.append(members[n_lab:])
    labeled = np.sort(np.concatenate(labeled_idx))
    unlabeled = np.sort(np.concatenate(unlabeled_idx))
    return dataset.subset(labeled), dataset.subset(unlabeled).without_labels()


@dataclass
class SyntheticSpec:
    """Recipe for the synthetic multi-domain dataset.

    Domain k owns the hue band centred at ``(k + 0.5) / k_domains`` (band
    width ``hue_band_fraction`` of the per-domain slot, so bands of
    different domains never touch) and a stripe texture with frequency
    ``base_frequency + k * frequency_step`` at a domain-specific
    orientation. Shape type, position, scale and stripe phase are drawn
    per sample, independent of the domain.
    """

    k_domains: int
    n_samples: int
    resolution: int = 64
    seed: int = 0
    hue_band_fraction: float = 0.5
    base_frequency: float = 3.0
    frequency_step: float = 2.0

    def __post_init__(self):
        if self.k_domains < 1:
            raise ConfigError(f"k_domains must be >= 1, got {self.k_domains}")
        if not 0.0 < self.hue_band_fraction <= 1.0:
            raise ConfigError("hue_band_fraction must be in (0, 1]")

    def hue_center(self, domain: int) -> float:
        return (domain + 0.5) / self.k_domains


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    h6 = (h % 1.0) * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.select(
        [sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
        [v, q, p, p, t], default=v,
    )
    g = np.select(
        [sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
        [t, v, v, q, p], default=p,
    )
    b = np.select(
        [sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
        [p, p, t, v, v], default=q,
    )
    return np.stack([r, g, b], axis=-1)


def _shape_mask(
    kind: int, xx: np.ndarray, yy: np.ndarray, cx: float, cy: float, r: float
) -> np.ndarray:
    if kind == 0:  # disk
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
    if kind == 1:  # square
        return np.maximum(np.abs(xx - cx), np.abs(yy - cy)) <= 0.9 * r
    # upward triangle: apex at (cx, cy - r), base halfwidth r at cy + r
    rise = yy - (cy - r)
    return (rise >= 0) & (yy <= cy + r) & (np.abs(xx - cx) <= rise / 2.0)


def make_synthetic(spec: SyntheticSpec) -> ImageDataset:
    """Generate the synthetic dataset described by ``spec``.

    Samples are assigned to domains round-robin, so the class sizes differ
    by at most one. Per-sample randomness is seeded independently, making
    the pixel data deterministic under ``spec.seed``.
    """
    res = spec.resolution
    coords = (np.arange(res) + 0.5) / res
    xx, yy = np.meshgrid(coords, coords)
    band = spec.hue_band_fraction / spec.k_domains

    images = np.empty((spec.n_samples, res, res, 3), dtype=np.float32)
    labels = np.empty(spec.n_samples, dtype=np.int64)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_samples)
    for i in range(spec.n_samples):
        rng = np.random.default_rng(seeds[i])
        domain = i % spec.k_domains
        labels[i] = domain

        hue = spec.hue_center(domain) + band * (rng.uniform() - 0.5)
        sat = rng.uniform(0.6, 0.9)
        freq = spec.base_frequency + spec.frequency_step * domain
        theta = math.pi * (domain + 0.5) / spec.k_domains
        phase = rng.uniform(0.0, 2.0 * math.pi)

        u = xx * math.cos(theta) + yy * math.sin(theta)
        stripes = 0.5 + 0.5 * np.sin(2.0 * math.pi * freq * u + phase)
        value = 0.5 + 0.4 * stripes

        kind = int(rng.integers(0, 3))
        cx, cy = rng.uniform(0.3, 0.7, size=2)
        radius = rng.uniform(0.12, 0.28)
        mask = _shape_mask(kind, xx, yy, cx, cy, radius)
        value = np.where(mask, 0.35 * value, value)

        rgb = hsv_to_rgb(np.full_like(value, hue), np.full_like(value, sat), value)
        images[i] = (2.0 * rgb - 1.0).astype(np.float32)

    return ImageDataset(images, labels, [f"domain_{k}" for k in range(spec.k_domains)])
