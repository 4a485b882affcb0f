"""Two-phase training engine, EMA, checkpointing, and batch orchestration.

Phase 1 trains the guiding network alone (clustering + style contrast)
while the translation networks stay frozen; phase 2 trains everything
jointly, one discriminator, generator and guiding update per iteration in
that order, each on fresh forward passes. The clustering/style loss
weights switch values exactly at the phase boundary.

Sequential mode is the ablation where the guiding network never receives
translation feedback: it trains alone in phase 1 and stays frozen while
the GAN trains in phase 2.

Inference and evaluation use exponential-moving-average copies of the
guiding network and the generator; the shadows track the live weights
exactly during phase 1 and blend with the configured decay afterwards.
"""

from __future__ import annotations

import copy
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .cluster_metrics import cluster_accuracy
from .config import TrainConfig, config_from_dict, config_to_dict
from .data import ImageDataset, augment_batch, split_semi_supervised
from .errors import CheckpointError, ConfigError
from .guiding import (
    GuidingNetwork,
    StyleQueue,
    mutual_information_loss,
    pseudo_label,
    style_contrastive_loss,
)
from .losses import (
    LossParts,
    aggregate,
    d_adv_hinge,
    d_adv_log,
    domain_cross_entropy,
    g_adv_hinge,
    g_adv_log,
    generator_objective,
    reconstruction_loss,
)
from .networks import Discriminator, Generator, select_head

CHECKPOINT_VERSION = 1


def phase_at(config: TrainConfig, iteration: int) -> str:
    """Phase of the given global iteration: guiding before the boundary."""
    return "guiding" if iteration < config.guiding_iters else "joint"


@torch.no_grad()
def ema_update(shadow: torch.nn.Module, live: torch.nn.Module, decay: float):
    """Blend shadow parameters toward the live module.

    ``shadow <- decay * shadow + (1 - decay) * live``; normalization
    buffers are copied outright. ``decay=0`` makes the shadow an exact
    copy, ``decay=1`` leaves it unchanged.
    """
    shadow_params = dict(shadow.named_parameters())
    for name, live_param in live.named_parameters():
        target = shadow_params.get(name)
        if target is None or target.shape != live_param.shape:
            raise ValueError(f"shadow/live parameter mismatch at '{name}'")
        target.mul_(decay).add_(live_param, alpha=1.0 - decay)
    shadow_buffers = dict(shadow.named_buffers())
    for name, live_buf in live.named_buffers():
        shadow_buffers[name].copy_(live_buf)
    return shadow


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def derangement(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random permutation of range(n) with no fixed point."""
    if n < 2:
        raise ConfigError("reference pairing needs a batch of at least 2")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def to_torch(batch: np.ndarray) -> Tensor:
    """Channel-last numpy batch -> contiguous channel-first float tensor."""
    return torch.from_numpy(np.ascontiguousarray(batch)).permute(0, 3, 1, 2).contiguous()


@dataclass
class TrainState:
    """Everything a run carries between iterations."""

    config: TrainConfig
    guiding: GuidingNetwork
    generator: Generator
    discriminator: Discriminator
    queue: StyleQueue
    ema_guiding: GuidingNetwork
    ema_generator: Generator
    opt_e: torch.optim.Optimizer
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    rng: np.random.Generator
    iteration: int = 0
    last_metrics: dict = field(default_factory=dict)

    @staticmethod
    def initialize(config: TrainConfig) -> "TrainState":
        torch.manual_seed(config.seed)
        guiding = GuidingNetwork(
            config.k_hat, ch=config.ch_guiding, style_dim=config.style_dim
        )
        generator = Generator(ch=config.ch_generator, style_dim=config.style_dim)
        discriminator = Discriminator(
            config.k_hat, ch=config.ch_discriminator, resolution=config.resolution
        )
        queue = StyleQueue(
            guiding,
            capacity=config.queue_size,
            momentum=config.momentum,
            temperature=config.temperature,
        )
        ema_guiding = _frozen_copy(guiding)
        ema_generator = _frozen_copy(generator)
        opt_e = torch.optim.Adam(
            guiding.parameters(),
            lr=config.lr,
            betas=(config.adam_beta1, config.adam_beta2),
            weight_decay=config.weight_decay,
        )
        opt_g = torch.optim.RMSprop(
            generator.parameters(),
            lr=config.lr,
            alpha=config.rmsprop_alpha,
            weight_decay=config.weight_decay,
        )
        opt_d = torch.optim.RMSprop(
            discriminator.parameters(),
            lr=config.lr,
            alpha=config.rmsprop_alpha,
            weight_decay=config.weight_decay,
        )
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5C]))
        return TrainState(
            config=config,
            guiding=guiding,
            generator=generator,
            discriminator=discriminator,
            queue=queue,
            ema_guiding=ema_guiding,
            ema_generator=ema_generator,
            opt_e=opt_e,
            opt_g=opt_g,
            opt_d=opt_d,
            rng=rng,
        )

    @property
    def phase(self) -> str:
        return phase_at(self.config, self.iteration)

    def ema_decay_now(self) -> float:
        """EMA blending starts at the joint phase; before that, track exactly."""
        return self.config.ema_decay if self.phase == "joint" else 0.0


def _frozen_copy(module: torch.nn.Module) -> torch.nn.Module:
    out = copy.deepcopy(module)
    for p in out.parameters():
        p.requires_grad_(False)
    return out


def _adv_d(config: TrainConfig, real_logit: Tensor, fake_logit: Tensor) -> Tensor:
    if config.adv_form == "hinge":
        return d_adv_hinge(real_logit, fake_logit)
    return d_adv_log(real_logit, fake_logit)


def _adv_g(config: TrainConfig, fake_logit: Tensor) -> Tensor:
    if config.adv_form == "hinge":
        return g_adv_hinge(fake_logit)
    return g_adv_log(fake_logit)


def _reference_labels(
    pseudo: Tensor, labels: Tensor | None, perm: np.ndarray
) -> Tensor:
    """Pseudo labels of the references, overridden by true labels when known."""
    y = pseudo[perm]
    if labels is not None:
        known = labels[perm]
        y = torch.where(known >= 0, known, y)
    return y


def _clustering_parts(
    state: TrainState, x: Tensor, x_plus: Tensor, labels: Tensor | None
) -> tuple[LossParts, Tensor, Tensor, Tensor]:
    """Shared clustering/style losses; returns (parts, keys, class logits, styles)."""
    logits, style = state.guiding(x)
    logits_plus, _ = state.guiding(x_plus)
    mi_loss, _ = mutual_information_loss(
        F.softmax(logits, dim=1), F.softmax(logits_plus, dim=1)
    )
    state.queue.momentum_update(state.guiding)
    keys = state.queue.encode_keys(x_plus)
    style_e = style_contrastive_loss(
        F.normalize(style, dim=1),
        keys,
        state.queue.contents(),
        state.queue.temperature,
    )
    ce = None
    if labels is not None and (labels >= 0).any():
        mask = labels >= 0
        ce = domain_cross_entropy(logits[mask], labels[mask])
    parts = LossParts(mi=mi_loss, style_e=style_e, ce=ce)
    return parts, keys, logits, style


def guiding_step(
    state: TrainState, batch: np.ndarray, labels: np.ndarray | None = None
) -> TrainState:
    """One phase-1 update: the guiding network alone; G and D untouched."""
    config = state.config
    state.guiding.train()
    x = to_torch(batch)
    x_plus = to_torch(augment_batch(batch, state.rng))
    label_t = None if labels is None else torch.from_numpy(labels)

    parts, keys, _, _ = _clustering_parts(state, x, x_plus, label_t)
    _, _, l_e = aggregate("guiding", parts, config.weights)

    state.opt_e.zero_grad(set_to_none=True)
    l_e.backward()
    state.opt_e.step()
    state.queue.push(keys)

    decay = state.ema_decay_now()
    ema_update(state.ema_guiding, state.guiding, decay)
    state.last_metrics = {
        "phase": "guiding",
        "loss_e": l_e.item(),
        "mi": parts.mi.item(),
        "style_e": parts.style_e.item(),
        "ce": parts.ce.item() if parts.ce is not None else float("nan"),
        "queue": len(state.queue),
    }
    state.iteration += 1
    return state


def _discriminator_substep(
    state: TrainState, x: Tensor, perm: np.ndarray, labels: Tensor | None
) -> dict:
    config = state.config
    _set_requires_grad(state.discriminator, True)
    _set_requires_grad(state.generator, False)
    _set_requires_grad(state.guiding, False)

    with torch.no_grad():
        posterior, style = state.guiding.encode(x)
        y_ref = _reference_labels(pseudo_label(posterior), labels, perm)
        fake = state.generator(x, style[perm])

    x_real = x[perm].detach().requires_grad_(True)
    real_logit = select_head(state.discriminator(x_real), y_ref)
    (grad,) = torch.autograd.grad(real_logit.sum(), x_real, create_graph=True)
    r1 = 0.5 * config.weights.r1_gamma * grad.pow(2).flatten(1).sum(1).mean()
    fake_logit = select_head(state.discriminator(fake), y_ref)
    adv_d = _adv_d(config, real_logit, fake_logit)

    state.opt_d.zero_grad(set_to_none=True)
    (adv_d + r1).backward()
    state.opt_d.step()
    return {"adv_d": adv_d.item(), "r1": r1.item(), "loss_d": adv_d.item()}


def _generator_substep(
    state: TrainState, x: Tensor, perm: np.ndarray, labels: Tensor | None
) -> dict:
    config = state.config
    _set_requires_grad(state.discriminator, False)
    _set_requires_grad(state.generator, True)
    _set_requires_grad(state.guiding, False)

    with torch.no_grad():
        posterior, style = state.guiding.encode(x)
        y_ref = _reference_labels(pseudo_label(posterior), labels, perm)
        s_ref = style[perm]

    fake = state.generator(x, s_ref)
    adv_g = _adv_g(config, select_head(state.discriminator(fake), y_ref))
    _, s_prime = state.guiding(fake)
    style_g = style_contrastive_loss(
        F.normalize(s_prime, dim=1),
        F.normalize(s_ref, dim=1),
        state.queue.contents(),
        state.queue.temperature,
    )
    rec = reconstruction_loss(x, state.generator(x, style))
    l_g = generator_objective(adv_g, style_g, rec, config.weights)

    state.opt_g.zero_grad(set_to_none=True)
    l_g.backward()
    state.opt_g.step()
    return {
        "adv_g": adv_g.item(),
        "style_g": style_g.item(),
        "rec": rec.item(),
        "loss_g": l_g.item(),
    }


def _guiding_substep(
    state: TrainState, x: Tensor, x_plus: Tensor, perm: np.ndarray,
    labels: Tensor | None,
) -> dict:
    config = state.config
    _set_requires_grad(state.discriminator, False)
    _set_requires_grad(state.generator, False)
    _set_requires_grad(state.guiding, True)

    parts, keys, logits, style = _clustering_parts(state, x, x_plus, labels)
    if config.e_feedback:
        y_ref = _reference_labels(pseudo_label(logits.detach()), labels, perm)
        s_ref = style[perm]
        fake = state.generator(x, s_ref)
        parts.adv_g = _adv_g(config, select_head(state.discriminator(fake), y_ref))
        _, s_prime = state.guiding(fake)
        parts.style_g = style_contrastive_loss(
            F.normalize(s_prime, dim=1),
            F.normalize(s_ref, dim=1).detach(),
            state.queue.contents(),
            state.queue.temperature,
        )
        parts.rec = reconstruction_loss(x, state.generator(x, style))
    _, _, l_e = aggregate("joint", parts, config.weights, config.e_feedback)

    state.opt_e.zero_grad(set_to_none=True)
    l_e.backward()
    state.opt_e.step()
    state.queue.push(keys)
    return {
        "loss_e": l_e.item(),
        "mi": parts.mi.item(),
        "style_e": parts.style_e.item(),
        "ce": parts.ce.item() if parts.ce is not None else float("nan"),
        "queue": len(state.queue),
    }


def joint_step(
    state: TrainState, batch: np.ndarray, labels: np.ndarray | None = None
) -> TrainState:
    """One phase-2 update: D, then G, then E, each on fresh forward passes.

    References are the batch itself under a random derangement, so every
    image is translated toward the style of a different image. In
    sequential mode the guiding update is skipped entirely (the network is
    frozen after phase 1).
    """
    config = state.config
    state.guiding.train()
    state.generator.train()
    state.discriminator.train()

    x = to_torch(batch)
    perm = derangement(state.rng, len(batch))
    label_t = None if labels is None else torch.from_numpy(labels)

    metrics: dict = {"phase": "joint"}
    metrics.update(_discriminator_substep(state, x, perm, label_t))
    metrics.update(_generator_substep(state, x, perm, label_t))
    if config.mode == "joint":
        x_plus = to_torch(augment_batch(batch, state.rng))
        metrics.update(_guiding_substep(state, x, x_plus, perm, label_t))
    _set_requires_grad(state.guiding, config.mode == "joint")
    _set_requires_grad(state.generator, True)
    _set_requires_grad(state.discriminator, True)

    decay = state.config.ema_decay
    ema_update(state.ema_generator, state.generator, decay)
    if config.mode == "joint":
        ema_update(state.ema_guiding, state.guiding, decay)
    state.last_metrics = metrics
    state.iteration += 1
    return state


def semi_supervised_step(
    state: TrainState,
    labeled_batch: tuple[np.ndarray, np.ndarray],
    unlabeled_batch: np.ndarray,
) -> TrainState:
    """One update on a mixed batch; labeled samples add cross entropy.

    True domain labels of labeled samples also replace the pseudo labels
    whenever those samples serve as discriminator references. With an
    empty labeled batch this is exactly ``guiding_step``/``joint_step``.
    """
    x_lab, y_lab = labeled_batch
    if len(x_lab) and (y_lab.min() < 0 or y_lab.max() >= state.config.k_hat):
        raise ConfigError(
            f"label out of range [0, {state.config.k_hat}): "
            f"{int(y_lab.min())}..{int(y_lab.max())}"
        )
    if len(x_lab):
        batch = np.concatenate([x_lab, unlabeled_batch])
        labels = np.concatenate(
            [
                y_lab.astype(np.int64),
                np.full(len(unlabeled_batch), -1, dtype=np.int64),
            ]
        )
    else:
        batch, labels = unlabeled_batch, None
    if state.phase == "guiding":
        return guiding_step(state, batch, labels)
    return joint_step(state, batch, labels)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(state: TrainState, path: str | Path) -> None:
    """Serialize the full run state to a single archive, atomically."""
    path = Path(path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(state.config),
        "iteration": state.iteration,
        "guiding": state.guiding.state_dict(),
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "ema_guiding": state.ema_guiding.state_dict(),
        "ema_generator": state.ema_generator.state_dict(),
        "queue": state.queue.state_dict(),
        "opt_e": state.opt_e.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "numpy_rng": state.rng.bit_generator.state,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            torch.save(payload, handle)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(
    path: str | Path, expected_config: TrainConfig | None = None
) -> TrainState:
    """Restore a run from ``save_checkpoint`` output.

    Continuing a loaded run reproduces the exact steps the original run
    would have taken. ``expected_config`` guards against resuming with an
    incompatible setup: a differing cluster count or resolution raises.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointError(f"checkpoint {path} has no version header")
    if payload["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload['version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )

    config = config_from_dict(payload["config"])
    if expected_config is not None:
        for key in ("k_hat", "resolution"):
            have, want = getattr(config, key), getattr(expected_config, key)
            if have != want:
                raise ConfigError(
                    f"checkpoint {key}={have} conflicts with configured "
                    f"{key}={want}"
                )

    state = TrainState.initialize(config)
    try:
        state.guiding.load_state_dict(payload["guiding"])
        state.generator.load_state_dict(payload["generator"])
        state.discriminator.load_state_dict(payload["discriminator"])
        state.ema_guiding.load_state_dict(payload["ema_guiding"])
        state.ema_generator.load_state_dict(payload["ema_generator"])
        state.queue.load_state_dict(payload["queue"])
        state.opt_e.load_state_dict(payload["opt_e"])
        state.opt_g.load_state_dict(payload["opt_g"])
        state.opt_d.load_state_dict(payload["opt_d"])
    except (KeyError, RuntimeError) as exc:
        raise CheckpointError(f"checkpoint {path} is incomplete: {exc}") from exc
    state.iteration = int(payload["iteration"])
    torch.set_rng_state(payload["torch_rng"])
    state.rng = np.random.default_rng()
    state.rng.bit_generator.state = payload["numpy_rng"]
    return state


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------

@torch.no_grad()
def encode_dataset(
    net: GuidingNetwork, dataset: ImageDataset, batch_size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted cluster ids and raw style codes for a whole dataset."""
    net.eval()
    preds, styles = [], []
    for start in range(0, len(dataset), batch_size):
        x = to_torch(dataset.images[start : start + batch_size])
        posterior, style = net.encode(x)
        preds.append(pseudo_label(posterior).numpy())
        styles.append(style.numpy())
    return np.concatenate(preds), np.concatenate(styles)


@torch.no_grad()
def translate_images(
    generator: Generator,
    sources: np.ndarray,
    styles: np.ndarray | Tensor,
    batch_size: int = 32,
) -> np.ndarray:
    """Translate channel-last sources with per-image style codes."""
    generator.eval()
    styles_t = (
        styles if isinstance(styles, Tensor) else torch.from_numpy(
            np.asarray(styles, dtype=np.float32)
        )
    )
    outs = []
    for start in range(0, len(sources), batch_size):
        x = to_torch(sources[start : start + batch_size])
        s = styles_t[start : start + batch_size]
        out = generator(x, s)
        outs.append(out.permute(0, 2, 3, 1).numpy())
    return np.concatenate(outs)


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------

LOG_COLUMNS = [
    "iteration", "phase", "loss_d", "loss_g", "loss_e", "adv_d", "adv_g",
    "r1", "rec", "style_g", "mi", "style_e", "ce", "queue", "cluster_acc",
]


def _format_log_row(iteration: int, metrics: dict, acc: float | None) -> str:
    values: list[str] = []
    for column in LOG_COLUMNS:
        if column == "iteration":
            values.append(str(iteration))
        elif column == "phase":
            values.append(str(metrics.get("phase", "?")))
        elif column == "cluster_acc":
            values.append("nan" if acc is None else f"{acc:.4f}")
        elif column == "queue":
            values.append(str(metrics.get("queue", 0)))
        else:
            value = metrics.get(column, float("nan"))
            values.append(f"{value:.6g}")
    return "\t".join(values)


def _sample_indices(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    return rng.choice(n, size=size, replace=n < size)


def run_training(
    config: TrainConfig,
    dataset: ImageDataset,
    out_dir: str | Path | None = None,
    eval_callback: Callable[[TrainState, dict], None] | None = None,
    state: TrainState | None = None,
) -> tuple[TrainState, list[dict]]:
    """Run the full two-phase schedule on ``dataset``.

    Semi-supervised runs (``gamma_label > 0``) carve a stratified labeled
    subset out of the dataset and feed every step a mixed batch with
    ``round(gamma * batch_size)`` labeled samples. Cluster accuracy is
    evaluated with the EMA guiding network every ``eval_every`` iterations
    whenever ground-truth labels exist.

    Returns the final state and the per-logged-iteration history. When
    ``out_dir`` is given, also writes ``train_log.tsv`` and periodic +
    final checkpoints there.
    """
    if config.gamma_label > 0 and dataset.labels is None:
        raise ConfigError(
            "gamma_label > 0 requires a dataset with ground-truth labels"
        )
    if config.gamma_label > 0 and dataset.num_classes > config.k_hat:
        raise ConfigError(
            f"dataset has {dataset.num_classes} classes but k_hat="
            f"{config.k_hat}; supervised labels would be out of range"
        )
    if dataset.resolution != config.resolution:
        raise ConfigError(
            f"dataset resolution {dataset.resolution} does not match "
            f"configured resolution {config.resolution}"
        )

    state = state or TrainState.initialize(config)
    labeled = unlabeled = None
    if config.gamma_label > 0:
        labeled, unlabeled = split_semi_supervised(
            dataset, config.gamma_label, config.seed
        )

    out_dir = Path(out_dir) if out_dir is not None else None
    log_handle = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_handle = open(out_dir / "train_log.tsv", "w")
        log_handle.write("\t".join(LOG_COLUMNS) + "\n")

    history: list[dict] = []
    try:
        while state.iteration < config.total_iters:
            batch_size = (
                config.guiding_batch_size
                if state.phase == "guiding"
                else config.batch_size
            )
            if config.gamma_label > 0:
                n_lab = min(
                    batch_size, max(1, round(config.gamma_label * batch_size))
                )
                lab_idx = _sample_indices(state.rng, len(labeled), n_lab)
                unlab_count = batch_size - n_lab
                if unlab_count > 0 and len(unlabeled) > 0:
                    unlab_idx = _sample_indices(state.rng, len(unlabeled), unlab_count)
                    x_unlab = unlabeled.images[unlab_idx]
                else:
                    x_unlab = unlabeled.images[:0]
                semi_supervised_step(
                    state,
                    (labeled.images[lab_idx], labeled.labels[lab_idx]),
                    x_unlab,
                )
            else:
                idx = _sample_indices(state.rng, len(dataset), batch_size)
                batch = dataset.images[idx]
                if state.phase == "guiding":
                    guiding_step(state, batch)
                else:
                    joint_step(state, batch)

            it = state.iteration  # already incremented by the step
            need_eval = (
                dataset.labels is not None
                and config.eval_every > 0
                and (it % config.eval_every == 0 or it == config.total_iters)
            )
            acc = None
            if need_eval:
                pred, _ = encode_dataset(state.ema_guiding, dataset)
                acc = cluster_accuracy(pred, dataset.labels)
                state.last_metrics["cluster_acc"] = acc
                if eval_callback is not None:
                    eval_callback(state, dict(state.last_metrics))
            if it % config.log_every == 0 or it == config.total_iters or need_eval:
                entry = {"iteration": it, "cluster_acc": acc, **state.last_metrics}
                history.append(entry)
                if log_handle is not None:
                    log_handle.write(
                        _format_log_row(it, state.last_metrics, acc) + "\n"
                    )
                    log_handle.flush()
            if (
                out_dir is not None
                and config.checkpoint_every > 0
                and it % config.checkpoint_every == 0
            ):
                save_checkpoint(state, out_dir / f"ckpt_{it:07d}.pt")
    finally:
        if log_handle is not None:
            log_handle.close()
    if out_dir is not None:
        save_checkpoint(state, out_dir / "ckpt_final.pt")
    return state, history
