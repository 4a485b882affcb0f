"""Guiding network: joint domain clustering and style encoding.

A single convolutional backbone (VGG11-BN layout, global average pooling)
feeds two linear heads: a clustering head that outputs a softmax posterior
over ``k_hat`` pseudo domains, and a style head that outputs a 128-d style
code. The clustering head is trained by maximizing the mutual information
between the cluster assignments of an image and its augmented view; the
style head is trained with an (N+1)-way contrastive loss whose negatives
come from a FIFO queue of codes produced by a momentum ("key") copy of the
network.
"""

from __future__ import annotations

import copy

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .errors import ConfigError
from .networks import init_weights

# Smallest joint-probability entry fed to a log; keeps the MI loss finite
# when a cluster collapses.
JOINT_PROB_FLOOR = 1e-8


class GuidingNetwork(nn.Module):
    """Shared conv backbone with a clustering head and a style head.

    The backbone is a VGG11-BN-style stack: eight 3x3 convolutions with
    batch norm and ReLU, max-pooling after convs 1, 2, 4, 6 and 8, followed
    by global average pooling to ``8 * ch`` features.

    Args:
        k_hat: preset number of pseudo domains (clustering-head width).
        ch: channel multiplier; conv widths are ch, 2ch, 4ch, 4ch, 8ch,
            8ch, 8ch, 8ch.
        style_dim: width of the style head output.
    """

    def __init__(self, k_hat: int, ch: int = 64, style_dim: int = 128):
        super().__init__()
        if k_hat < 1:
            raise ConfigError(f"k_hat must be >= 1, got {k_hat}")
        self.k_hat = k_hat
        self.ch = ch
        self.style_dim = style_dim

        widths = [ch, 2 * ch, 4 * ch, 4 * ch, 8 * ch, 8 * ch, 8 * ch, 8 * ch]
        pool_after = {1, 2, 4, 6, 8}
        layers: list[nn.Module] = []
        c_in = 3
        for i, c_out in enumerate(widths, start=1):
            layers += [
                nn.Conv2d(c_in, c_out, 3, padding=1),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
            if i in pool_after:
                layers.append(nn.MaxPool2d(2))
            c_in = c_out
        self.backbone = nn.Sequential(*layers)
        self.class_head = nn.Linear(8 * ch, k_hat)
        self.style_head = nn.Linear(8 * ch, style_dim)
        init_weights(self)

    def features(self, x: Tensor) -> Tensor:
        """Backbone features after global average pooling, shape (B, 8*ch)."""
        if x.dim() != 4 or x.shape[1] != 3:
            raise ConfigError(
                f"expected input of shape (B, 3, H, W), got {tuple(x.shape)}"
            )
        h, w = x.shape[2], x.shape[3]
        if h < 32 or w < 32 or h % 32 or w % 32:
            raise ConfigError(
                f"spatial size must be a multiple of 32 and >= 32, got {h}x{w}"
            )
        feat = self.backbone(x)
        return feat.mean(dim=(2, 3))

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (class logits (B, k_hat), style codes (B, style_dim))."""
        feat = self.features(x)
        return self.class_head(feat), self.style_head(feat)

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (domain posterior (B, k_hat), style codes (B, style_dim)).

        The posterior rows are softmax outputs, nonnegative and summing to 1.
        """
        logits, style = self.forward(x)
        return F.softmax(logits, dim=1), style


def pseudo_label(posterior: Tensor) -> Tensor:
    """Hard domain assignment: argmax of each posterior row.

    Ties resolve to the lowest index, so the labeling is deterministic.
    """
    return torch.argmax(posterior, dim=-1)


def mutual_information_loss(
    p: Tensor, p_plus: Tensor, floor: float = JOINT_PROB_FLOOR
) -> tuple[Tensor, Tensor]:
    """Negative mutual information between paired cluster assignments.

    The joint assignment matrix is the batch mean of the outer products of
    the two posterior rows, symmetrized (the two views are exchangeable) and
    renormalized. Mutual information is computed from that joint and its
    marginals; entries are floored inside the logs for stability.

    Args:
        p: posterior batch for the original views, shape (B, k_hat).
        p_plus: posterior batch for the augmented views, same shape.
        floor: smallest probability fed to a log.

    Returns:
        (loss, joint): ``loss`` is ``-I`` (minimizing it maximizes mutual
        information, with ``0 <= I <= ln k_hat``); ``joint`` is the
        symmetrized k_hat x k_hat assignment matrix.
    """
    if p.dim() != 2 or p.shape != p_plus.shape:
        raise ValueError(
            f"posterior batches must be (B, k_hat) and aligned, got "
            f"{tuple(p.shape)} vs {tuple(p_plus.shape)}"
        )
    if p.shape[0] == 0:
        raise ValueError("empty posterior batch")
    joint = p.t() @ p_plus / p.shape[0]
    joint = (joint + joint.t()) / 2
    joint = joint / joint.sum()
    p_i = joint.sum(dim=1, keepdim=True)
    p_j = joint.sum(dim=0, keepdim=True)
    log_terms = (
        torch.log(joint.clamp(min=floor))
        - torch.log(p_i.clamp(min=floor))
        - torch.log(p_j.clamp(min=floor))
    )
    mutual_info = (joint * log_terms).sum()
    return -mutual_info, joint


def style_contrastive_loss(
    query: Tensor,
    positive: Tensor,
    negatives: Tensor | None,
    temperature: float,
) -> Tensor:
    """(N+1)-way contrastive loss over unit style codes.

    ``-log(exp(q.pos/t) / (exp(q.pos/t) + sum_n exp(q.neg_n/t)))`` averaged
    over the batch. Only the query carries gradient: the positive and the
    negatives are detached internally (the keys come from the momentum
    encoder and the queue, which are never trained by gradient).

    Args:
        query: (B, D) unit query codes (gradient-carrying).
        positive: (B, D) unit positive keys, one per query.
        negatives: (N, D) negative codes, or None/empty during queue warmup,
            in which case the loss is computed over the positive alone.
        temperature: softmax temperature, > 0.

    Returns:
        Scalar loss (strictly positive whenever negatives are present).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if query.shape != positive.shape:
        raise ValueError(
            f"query/positive shapes differ: {tuple(query.shape)} vs "
            f"{tuple(positive.shape)}"
        )
    pos_logit = (query * positive.detach()).sum(dim=1, keepdim=True)
    if negatives is not None and negatives.numel() > 0:
        neg_logits = query @ negatives.detach().t()
        logits = torch.cat([pos_logit, neg_logits], dim=1)
    else:
        logits = pos_logit
    logits = logits / temperature
    target = torch.zeros(logits.shape[0], dtype=torch.long, device=logits.device)
    return F.cross_entropy(logits, target)


class StyleQueue:
    """FIFO of negative style codes plus the momentum key encoder.

    The buffer starts empty and grows until it holds ``capacity`` codes;
    afterwards a push of ``b`` codes evicts exactly the ``b`` oldest. The
    key encoder is a gradient-free copy of the query network, updated only
    by momentum blending.
    """

    def __init__(
        self,
        query_net: GuidingNetwork,
        capacity: int = 1024,
        momentum: float = 0.999,
        temperature: float = 0.07,
    ):
        if capacity < 0:
            raise ConfigError(f"queue capacity must be >= 0, got {capacity}")
        if not 0.0 <= momentum <= 1.0:
            raise ConfigError(f"momentum must be in [0, 1], got {momentum}")
        self.capacity = capacity
        self.momentum = momentum
        self.temperature = temperature
        self.key_net = copy.deepcopy(query_net)
        for param in self.key_net.parameters():
            param.requires_grad_(False)
        self.buffer = torch.zeros(0, query_net.style_dim)

    def __len__(self) -> int:
        return self.buffer.shape[0]

    def contents(self) -> Tensor | None:
        """Current negatives, oldest first; None while empty."""
        return self.buffer if len(self) else None

    def push(self, codes: Tensor) -> None:
        """Append unit codes, evicting the oldest beyond capacity."""
        if codes.numel() == 0:
            return
        merged = torch.cat([self.buffer, codes.detach()], dim=0)
        self.buffer = merged[-self.capacity :] if self.capacity else merged[:0]

    @torch.no_grad()
    def momentum_update(self, query_net: GuidingNetwork) -> None:
        """Blend key parameters toward the query: k <- m*k + (1-m)*q."""
        momentum_update(self, query_net)

    @torch.no_grad()
    def encode_keys(self, x: Tensor) -> Tensor:
        """Unit-normalized style codes from the key encoder."""
        _, style = self.key_net(x)
        return F.normalize(style, dim=1)

    def state_dict(self) -> dict:
        return {
            "buffer": self.buffer.clone(),
            "key_net": self.key_net.state_dict(),
            "capacity": self.capacity,
            "momentum": self.momentum,
            "temperature": self.temperature,
        }

    def load_state_dict(self, state: dict) -> None:
        self.buffer = state["buffer"].clone()
        self.key_net.load_state_dict(state["key_net"])
        self.capacity = state["capacity"]
        self.momentum = state["momentum"]
        self.temperature = state["temperature"]


@torch.no_grad()
def momentum_update(queue: StyleQueue, query_net: GuidingNetwork) -> StyleQueue:
    """Momentum-blend the queue's key parameters toward the query network."""
    m = queue.momentum
    key_params = dict(queue.key_net.named_parameters())
    for name, q_param in query_net.named_parameters():
        k_param = key_params.get(name)
        if k_param is None or k_param.shape != q_param.shape:
            raise ValueError(f"key/query parameter mismatch at '{name}'")
        k_param.mul_(m).add_(q_param.detach(), alpha=1.0 - m)
    # Normalization buffers (BN running stats) follow the query directly.
    key_buffers = dict(queue.key_net.named_buffers())
    for name, q_buf in query_net.named_buffers():
        key_buffers[name].copy_(q_buf)
    return queue
