"""Training objectives and their aggregation into L_D, L_G and L_E.

The adversarial game uses the hinge form with R1 gradient penalty on real
images (the saturating log form is kept behind a flag for fidelity
experiments). The generator additionally minimizes a style contrastive
loss against the reference code — sharing the negative queue with the
guiding network's own contrastive loss — and an L1 reconstruction loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from .guiding import StyleQueue, style_contrastive_loss
from .networks import Discriminator, select_head

Phase = str  # "guiding" | "joint"


@dataclass
class LossWeights:
    """Objective weights; the style/MI pair switches at the phase boundary."""

    rec: float = 0.1
    style_g: float = 0.01
    style_e_guiding: float = 1.0
    style_e_joint: float = 0.1
    mi_guiding: float = 5.0
    mi_joint: float = 0.5
    r1_gamma: float = 10.0
    ce: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")

    def style_e(self, phase: Phase) -> float:
        return self.style_e_guiding if phase == "guiding" else self.style_e_joint

    def mi(self, phase: Phase) -> float:
        return self.mi_guiding if phase == "guiding" else self.mi_joint


def d_adv_hinge(real_logit: Tensor, fake_logit: Tensor) -> Tensor:
    """Hinge discriminator loss: mean relu(1 - real) + mean relu(1 + fake)."""
    return F.relu(1.0 - real_logit).mean() + F.relu(1.0 + fake_logit).mean()


def g_adv_hinge(fake_logit: Tensor) -> Tensor:
    """Hinge generator loss: -mean fake logit."""
    return -fake_logit.mean()


def d_adv_log(real_logit: Tensor, fake_logit: Tensor) -> Tensor:
    """Saturating-log discriminator loss (fidelity flag only)."""
    return (
        F.softplus(-real_logit).mean() + F.softplus(fake_logit).mean()
    )


def g_adv_log(fake_logit: Tensor) -> Tensor:
    """Saturating-log generator loss: mean log(1 - sigmoid(fake))."""
    return -F.softplus(fake_logit).mean()


def r1_penalty(
    discriminator: Discriminator, real: Tensor, y: Tensor, gamma: float = 10.0
) -> Tensor:
    """R1 gradient penalty on real images at their domain heads.

    ``(gamma / 2) * mean_b ||grad_x D_y(x_b)||^2``. Raises if gradients are
    unavailable (e.g. under ``torch.no_grad()``).
    """
    x = real.detach().requires_grad_(True)
    logits = select_head(discriminator(x), y)
    (grad,) = torch.autograd.grad(logits.sum(), x, create_graph=True)
    grad_sq = grad.pow(2).flatten(1).sum(dim=1)
    return 0.5 * gamma * grad_sq.mean()


def style_contrastive_g(
    s_prime: Tensor,
    s_tilde: Tensor,
    negatives: Tensor | None,
    temperature: float,
) -> Tensor:
    """Style contrastive loss for the generator.

    Same (N+1)-way form as the guiding network's contrastive loss, but the
    positive pair is (style of the translated image, style of the
    reference); the negatives come from the same queue. The temperature is
    applied to numerator and denominator alike. Only ``s_prime`` should
    carry gradient.
    """
    return style_contrastive_loss(s_prime, s_tilde, negatives, temperature)


def reconstruction_loss(x: Tensor, x_rec: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if x.shape != x_rec.shape:
        raise ValueError(
            f"shape mismatch: {tuple(x.shape)} vs {tuple(x_rec.shape)}"
        )
    return (x - x_rec).abs().mean()


def domain_cross_entropy(class_logits: Tensor, labels: Tensor) -> Tensor:
    """Cross entropy between true domain labels and the clustering head."""
    if labels.min() < 0 or labels.max() >= class_logits.shape[1]:
        raise IndexError(
            f"label out of range [0, {class_logits.shape[1]}): "
            f"min={int(labels.min())}, max={int(labels.max())}"
        )
    return F.cross_entropy(class_logits, labels)


@dataclass
class LossParts:
    """Component losses of one batch; fields unused in a phase stay None."""

    mi: Tensor | None = None  # negative mutual information (to minimize)
    style_e: Tensor | None = None
    adv_d: Tensor | None = None  # discriminator adversarial objective
    adv_g: Tensor | None = None
    style_g: Tensor | None = None
    rec: Tensor | None = None
    ce: Tensor | None = None


def generator_objective(
    adv_g: Tensor, style_g: Tensor, rec: Tensor, weights: LossWeights
) -> Tensor:
    """``L_G = adv_g + w.style_g * style_g + w.rec * rec``."""
    return adv_g + weights.style_g * style_g + weights.rec * rec


def aggregate(
    phase: Phase,
    parts: LossParts,
    weights: LossWeights,
    e_feedback: bool = True,
) -> tuple[Tensor | None, Tensor | None, Tensor]:
    """Combine component losses into (L_D, L_G, L_E) for the given phase.

    In the joint phase ``L_G = adv_g + w.style_g * style_g + w.rec * rec``
    and ``L_E = L_G + w.mi * mi + w.style_e * style_e``: the guiding network
    receives the translation losses as feedback. Setting ``e_feedback``
    False (the sequential-training ablation) drops the L_G term from L_E.
    In the guiding phase the translation networks are frozen, so L_D and
    L_G are None and L_E holds only the clustering and style terms.

    ``L_D`` is simply the adversarial discriminator objective (R1 is added
    by the engine per update); it is None when ``adv_d`` was computed in a
    separate sub-step. The cross-entropy part, present only in
    semi-supervised runs, always adds ``w.ce * ce`` to L_E.
    """
    if phase not in ("guiding", "joint"):
        raise ValueError(f"unknown phase {phase!r}")
    if parts.mi is None or parts.style_e is None:
        raise ValueError(f"missing clustering/style loss parts for {phase} phase")

    l_e = weights.mi(phase) * parts.mi + weights.style_e(phase) * parts.style_e
    if parts.ce is not None:
        l_e = l_e + weights.ce * parts.ce

    if phase == "guiding":
        return None, None, l_e

    gen_parts = (parts.adv_g, parts.style_g, parts.rec)
    l_g = None
    if any(p is not None for p in gen_parts):
        if any(p is None for p in gen_parts):
            raise ValueError("partial generator losses: need adv_g, style_g, rec")
        l_g = generator_objective(parts.adv_g, parts.style_g, parts.rec, weights)
    if e_feedback:
        if l_g is None:
            raise ValueError(
                "joint-phase L_E requires the generator losses when the "
                "guiding network receives feedback"
            )
        l_e = l_e + l_g
    return parts.adv_d, l_g, l_e
