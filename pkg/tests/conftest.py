"""Shared fixtures: tiny networks and datasets sized for fast tests."""

import numpy as np
import pytest
import torch

from styleclust import GuidingNetwork, ImageDataset, SyntheticSpec, make_synthetic
from styleclust.config import TrainConfig
from styleclust.losses import LossWeights


def tiny_config(**overrides) -> TrainConfig:
    """32x32, minimal channels; one step runs in tens of milliseconds."""
    base = dict(
        k_hat=3,
        resolution=32,
        batch_size=4,
        guiding_batch_size=4,
        guiding_iters=2,
        joint_iters=2,
        queue_size=16,
        momentum=0.9,
        ema_decay=0.9,
        ch_guiding=2,
        ch_generator=2,
        ch_discriminator=2,
        style_dim=8,
        log_every=1,
        eval_every=0,
        checkpoint_every=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_guiding():
    torch.manual_seed(0)
    return GuidingNetwork(k_hat=4, ch=2, style_dim=8)


@pytest.fixture(scope="session")
def tiny_dataset() -> ImageDataset:
    return make_synthetic(SyntheticSpec(k_domains=3, n_samples=24, resolution=32, seed=3))


@pytest.fixture
def weights():
    return LossWeights()
