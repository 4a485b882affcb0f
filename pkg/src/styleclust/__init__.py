"""Unsupervised image-to-image translation with jointly learned style clusters.

A guiding network clusters unlabeled images into pseudo domains (mutual
information maximization over augmentation pairs) while learning style
codes (momentum-queue contrastive learning). The cluster assignments and
style codes drive a reference-guided translation GAN: an AdaIN generator
and a multi-head hinge discriminator with R1 regularization, trained in a
guiding-only phase followed by a joint phase.
"""

from .config import RunConfig, TrainConfig, desk_config, load_config
from .cluster_metrics import (
    average_style,
    cluster_accuracy,
    export_embeddings,
    ioi,
)
from .data import (
    ImageDataset,
    SyntheticSpec,
    augment,
    load_image_folder,
    make_synthetic,
    save_image_folder,
    split_semi_supervised,
)
from .errors import CheckpointError, ConfigError, DatasetError
from .gen_metrics import (
    FeatureEmbedder,
    GaussianSummary,
    density_coverage,
    frechet_distance,
    make_stub_embedder,
    mfid,
    protocol_sample,
)
from .guiding import (
    GuidingNetwork,
    StyleQueue,
    momentum_update,
    mutual_information_loss,
    pseudo_label,
    style_contrastive_loss,
)
from .losses import (
    LossParts,
    LossWeights,
    aggregate,
    d_adv_hinge,
    domain_cross_entropy,
    g_adv_hinge,
    r1_penalty,
    reconstruction_loss,
    style_contrastive_g,
)
from .networks import Discriminator, Generator, adain, select_head
from .training import (
    TrainState,
    ema_update,
    encode_dataset,
    guiding_step,
    joint_step,
    load_checkpoint,
    phase_at,
    run_training,
    save_checkpoint,
    semi_supervised_step,
    translate_images,
)

__version__ = "0.1.0"
