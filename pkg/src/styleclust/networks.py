"""Generator and multi-head discriminator for reference-guided translation.

The generator is a content encoder (one 7x7 conv plus three stride-2 4x4
convs, instance-normalized), a bottleneck of two IN residual blocks and two
AdaIN residual blocks, and a decoder of three nearest-upsample + 5x5 conv
AdaIN stages followed by a final 7x7 conv with tanh. A single affine mapper
turns the style code into the (scale, shift) pair of every AdaIN site, with
the scale parameterized as ``1 + residual`` so a zero mapper output leaves
features instance-normalized.

The discriminator is a stack of residual blocks with filter response
normalization and average-pool downsampling, ending in a 1x1 conv that
emits one real/fake logit per pseudo domain.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .errors import ConfigError

FRN_EPS = 1e-6


def init_weights(module: nn.Module) -> None:
    """He-normal conv weights, N(0, 0.01) linear weights, zero biases."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Linear):
            nn.init.normal_(m.weight, std=0.01)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def adain(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Adaptive instance normalization.

    Normalizes each (sample, channel) feature map to zero mean and unit
    variance, then applies the per-channel ``scale`` and ``shift`` from the
    style mapper. With scale 1 and shift 0 the result is exactly the
    instance-normalized input.
    """
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    normalized = (x - mean) / torch.sqrt(var + eps)
    return normalized * scale[:, :, None, None] + shift[:, :, None, None]


class InResBlock(nn.Module):
    """Residual block with instance normalization: x + IN-conv stack."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class AdainResBlock(nn.Module):
    """Residual block whose two norm sites are AdaIN-modulated."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.channels = channels

    def forward(self, x: Tensor, params: list[tuple[Tensor, Tensor]]) -> Tensor:
        """``params`` holds the (scale, shift) pairs for the two sites."""
        h = F.relu(adain(self.conv1(x), *params[0]))
        h = adain(self.conv2(h), *params[1])
        return x + h


class Generator(nn.Module):
    """Style-modulated translator: (image, style code) -> image.

    Args:
        ch: channel multiplier (64 reproduces the reference layout).
        style_dim: width of the incoming style code.
    """

    def __init__(self, ch: int = 64, style_dim: int = 128):
        super().__init__()
        self.ch = ch
        self.style_dim = style_dim

        self.encoder = nn.Sequential(
            nn.Conv2d(3, ch, 7, padding=3),
            nn.InstanceNorm2d(ch, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(ch, 2 * ch, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * ch, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * ch, 4 * ch, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * ch, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * ch, 8 * ch, 4, stride=2, padding=1),
            nn.InstanceNorm2d(8 * ch, affine=True),
            nn.ReLU(inplace=True),
            InResBlock(8 * ch),
            InResBlock(8 * ch),
        )
        self.adain_blocks = nn.ModuleList(
            [AdainResBlock(8 * ch), AdainResBlock(8 * ch)]
        )
        self.up_convs = nn.ModuleList(
            [
                nn.Conv2d(8 * ch, 4 * ch, 5, padding=2),
                nn.Conv2d(4 * ch, 2 * ch, 5, padding=2),
                nn.Conv2d(2 * ch, ch, 5, padding=2),
            ]
        )
        self.to_rgb = nn.Conv2d(ch, 3, 7, padding=3)

        # One AdaIN site per decoder stage plus two per AdaIN residual block.
        self.adain_channels = [8 * ch] * 4 + [4 * ch, 2 * ch, ch]
        self.style_mapper = nn.Linear(style_dim, 2 * sum(self.adain_channels))

        init_weights(self)

    def adain_params(self, style: Tensor) -> list[tuple[Tensor, Tensor]]:
        """Per-site (scale, shift) from the style code; scale = 1 + residual."""
        flat = self.style_mapper(style)
        scales, shifts = flat.chunk(2, dim=1)
        params = []
        offset = 0
        for width in self.adain_channels:
            params.append(
                (
                    1.0 + scales[:, offset : offset + width],
                    shifts[:, offset : offset + width],
                )
            )
            offset += width
        return params

    def forward(self, x: Tensor, style: Tensor) -> Tensor:
        if x.shape[0] != style.shape[0]:
            raise ValueError(
                f"batch mismatch: {x.shape[0]} images vs {style.shape[0]} styles"
            )
        if x.dim() != 4 or x.shape[1] != 3:
            raise ConfigError(
                f"expected input of shape (B, 3, H, W), got {tuple(x.shape)}"
            )
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ConfigError(
                f"spatial size must be a multiple of 8, got "
                f"{x.shape[2]}x{x.shape[3]}"
            )
        params = self.adain_params(style)
        h = self.encoder(x)
        h = self.adain_blocks[0](h, params[0:2])
        h = self.adain_blocks[1](h, params[2:4])
        for i, conv in enumerate(self.up_convs):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.relu(adain(conv(h), *params[4 + i]))
        return torch.tanh(self.to_rgb(h))


def translate(generator: Generator, x: Tensor, style: Tensor) -> Tensor:
    """Functional alias for ``generator(x, style)``."""
    return generator(x, style)


class FilterResponseNorm(nn.Module):
    """Filter response normalization with a thresholded linear unit.

    Each channel is divided by the root mean square of its spatial
    activations, affinely transformed, then thresholded at a learned tau.
    """

    def __init__(self, channels: int, eps: float = FRN_EPS):
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1, 1))
        self.tau = nn.Parameter(torch.zeros(1, channels, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        nu2 = x.pow(2).mean(dim=(2, 3), keepdim=True)
        x = x * torch.rsqrt(nu2 + self.eps)
        return torch.max(self.gamma * x + self.beta, self.tau)


class FrnResBlock(nn.Module):
    """Pre-normalized residual block: FRN/TLU -> conv, twice, plus skip.

    An average-pool downsample (when requested) applies to both branches;
    the skip uses a 1x1 conv whenever the channel count changes.
    """

    def __init__(self, c_in: int, c_out: int, downsample: bool = False):
        super().__init__()
        self.norm1 = FilterResponseNorm(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm2 = FilterResponseNorm(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.downsample = downsample
        self.skip = (
            nn.Conv2d(c_in, c_out, 1, bias=False) if c_in != c_out else None
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(self.norm1(x))
        h = self.conv2(self.norm2(h))
        s = x if self.skip is None else self.skip(x)
        if self.downsample:
            h = F.avg_pool2d(h, 2)
            s = F.avg_pool2d(s, 2)
        return h + s


class Discriminator(nn.Module):
    """Multi-head discriminator: one real/fake logit per pseudo domain.

    Ten FRN residual blocks (five of them downsampling, doubling channels
    up to 16*ch) followed by a valid conv collapsing the remaining spatial
    extent and a 1x1 conv to ``k_hat`` logits.

    Args:
        k_hat: number of pseudo domains (output width).
        ch: channel multiplier.
        resolution: training resolution; fixes the kernel of the collapsing
            conv (4 at 128x128, 2 at 64x64).
    """

    def __init__(self, k_hat: int, ch: int = 64, resolution: int = 128):
        super().__init__()
        if k_hat < 1:
            raise ConfigError(f"k_hat must be >= 1, got {k_hat}")
        if resolution % 32:
            raise ConfigError(
                f"resolution must be a multiple of 32, got {resolution}"
            )
        self.k_hat = k_hat
        self.ch = ch
        self.resolution = resolution

        blocks: list[nn.Module] = []
        widths = [ch, 2 * ch, 2 * ch, 4 * ch, 4 * ch, 8 * ch, 8 * ch,
                  16 * ch, 16 * ch, 16 * ch]
        c_in = ch
        for i, c_out in enumerate(widths):
            blocks.append(FrnResBlock(c_in, c_out, downsample=(i % 2 == 1)))
            c_in = c_out
        self.stem = nn.Conv2d(3, ch, 3, padding=1)
        self.blocks = nn.Sequential(*blocks)
        final_spatial = resolution // 32
        self.final_conv = nn.Conv2d(16 * ch, 16 * ch, final_spatial)
        self.head = nn.Conv2d(16 * ch, k_hat, 1)
        init_weights(self)

    def forward(self, x: Tensor) -> Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ConfigError(
                f"expected input of shape (B, 3, H, W), got {tuple(x.shape)}"
            )
        if x.shape[2] != self.resolution or x.shape[3] != self.resolution:
            raise ConfigError(
                f"discriminator built for {self.resolution}x{self.resolution} "
                f"inputs, got {x.shape[2]}x{x.shape[3]}"
            )
        h = self.stem(x)
        h = self.blocks(h)
        h = F.leaky_relu(h, 0.2)
        h = self.final_conv(h)
        h = F.leaky_relu(h, 0.2)
        return self.head(h).flatten(1)


def discriminate(discriminator: Discriminator, x: Tensor) -> Tensor:
    """Functional alias for ``discriminator(x)``: (B, k_hat) logits."""
    return discriminator(x)


def select_head(logits: Tensor, y: Tensor) -> Tensor:
    """Gather each row's logit at its domain index.

    Gradients flow only through the selected entries.
    """
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise IndexError(
            f"domain index out of range [0, {logits.shape[1]}): "
            f"min={int(y.min())}, max={int(y.max())}"
        )
    return logits.gather(1, y.view(-1, 1)).squeeze(1)
