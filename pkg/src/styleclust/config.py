"""Training configuration, TOML loading, and the desk-scale preset.

The config file mirrors ``TrainConfig`` exactly: scalar fields at the top
level, loss weights in a ``[weights]`` table, and an optional
``[synthetic]`` table describing an on-the-fly synthetic dataset for runs
that do not point at an image folder.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import SyntheticSpec
from .errors import ConfigError
from .losses import LossWeights

TRAIN_MODES = ("joint", "sequential")
ADV_FORMS = ("hinge", "log")


@dataclass
class TrainConfig:
    """All knobs of a training run."""

    k_hat: int
    resolution: int = 128
    batch_size: int = 32
    guiding_batch_size: int | None = None  # defaults to batch_size
    guiding_iters: int = 65000
    joint_iters: int = 100000
    lr: float = 1e-4
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    rmsprop_alpha: float = 0.99
    temperature: float = 0.07
    queue_size: int = 1024
    momentum: float = 0.999
    ema_decay: float = 0.999
    mode: str = "joint"
    e_feedback: bool = True
    gamma_label: float = 0.0
    seed: int = 0
    style_dim: int = 128
    ch_guiding: int = 64
    ch_generator: int = 64
    ch_discriminator: int = 64
    adv_form: str = "hinge"
    log_every: int = 50
    eval_every: int = 500
    checkpoint_every: int = 10000
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.k_hat < 1:
            raise ConfigError(f"k_hat must be >= 1, got {self.k_hat}")
        if self.guiding_iters < 0 or self.joint_iters < 0:
            raise ConfigError("iteration counts must be >= 0")
        if not 0.0 <= self.gamma_label <= 1.0:
            raise ConfigError(
                f"gamma_label must be in [0, 1], got {self.gamma_label}"
            )
        if self.resolution % 32 or self.resolution < 32:
            raise ConfigError(
                f"resolution must be a positive multiple of 32, got "
                f"{self.resolution}"
            )
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (reference pairing)")
        if self.guiding_batch_size is None:
            self.guiding_batch_size = self.batch_size
        if self.guiding_batch_size < 2:
            raise ConfigError("guiding_batch_size must be >= 2")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.adv_form not in ADV_FORMS:
            raise ConfigError(
                f"adv_form must be one of {ADV_FORMS}, got {self.adv_form!r}"
            )
        if not 0.0 <= self.momentum <= 1.0 or not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError("momentum and ema_decay must be in [0, 1]")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

    @property
    def total_iters(self) -> int:
        return self.guiding_iters + self.joint_iters


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)


def config_from_dict(payload: dict) -> TrainConfig:
    payload = dict(payload)
    weights_dict = payload.pop("weights", {})
    known = {f.name for f in fields(TrainConfig)} - {"weights"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    known_weights = {f.name for f in fields(LossWeights)}
    unknown_weights = set(weights_dict) - known_weights
    if unknown_weights:
        raise ConfigError(f"unknown weight keys: {sorted(unknown_weights)}")
    try:
        weights = LossWeights(**weights_dict)
        return TrainConfig(weights=weights, **payload)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


@dataclass
class RunConfig:
    """A parsed config file: training knobs plus an optional synthetic recipe."""

    train: TrainConfig
    synthetic: SyntheticSpec | None = None


def load_config(path: str | Path) -> RunConfig:
    """Parse a TOML config file into a ``RunConfig``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc

    synthetic_dict = raw.pop("synthetic", None)
    train = config_from_dict(raw)
    synthetic = None
    if synthetic_dict is not None:
        synthetic_dict.setdefault("resolution", train.resolution)
        try:
            synthetic = SyntheticSpec(**synthetic_dict)
        except TypeError as exc:
            raise ConfigError(f"bad [synthetic] section: {exc}") from exc
        if synthetic.resolution != train.resolution:
            raise ConfigError(
                f"synthetic resolution {synthetic.resolution} does not match "
                f"training resolution {train.resolution}"
            )
    return RunConfig(train=train, synthetic=synthetic)


def desk_config(k_hat: int = 3, **overrides) -> TrainConfig:
    """Small-network preset that trains on a laptop-class CPU.

    Synthetic data, 64x64 images, 1K guiding + 2K joint iterations; sized
    so the end-to-end run finishes in well under an hour on one core.
    """
    base = dict(
        k_hat=k_hat,
        resolution=64,
        batch_size=8,
        guiding_batch_size=32,
        guiding_iters=1000,
        joint_iters=2000,
        queue_size=512,
        momentum=0.99,
        ema_decay=0.995,
        ch_guiding=8,
        ch_generator=8,
        ch_discriminator=4,
        log_every=25,
        eval_every=100,
        checkpoint_every=1000,
    )
    base.update(overrides)
    return TrainConfig(**base)
