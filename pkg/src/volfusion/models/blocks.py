"""Convolutional building blocks shared by PCT-Net and the 3D U-Net baseline.

A "2D" block uses (1, 3, 3) kernels so the depth axis is untouched at the
(anisotropic) full-resolution level; a "3D" block uses 3x3x3 kernels. Each
basic layer is BatchNorm -> PReLU -> convolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .attention import AttentionSubBlock


def _kernel(two_d: bool) -> tuple[int, int, int]:
    return (1, 3, 3) if two_d else (3, 3, 3)


def _padding(two_d: bool) -> tuple[int, int, int]:
    return (0, 1, 1) if two_d else (1, 1, 1)


class ConvBlock(nn.Module):
    """Two BN -> PReLU -> conv layers; optional dropout before the second conv."""

    def __init__(self, channels: int, two_d: bool = False, dropout: float = 0.0):
        super().__init__()
        k, p = _kernel(two_d), _padding(two_d)
        self.norm1 = nn.BatchNorm3d(channels)
        self.act1 = nn.PReLU(channels)
        self.conv1 = nn.Conv3d(channels, channels, k, padding=p)
        self.norm2 = nn.BatchNorm3d(channels)
        self.act2 = nn.PReLU(channels)
        self.drop = nn.Dropout3d(dropout) if dropout > 0 else nn.Identity()
        self.conv2 = nn.Conv3d(channels, channels, k, padding=p)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.conv1(self.act1(self.norm1(x)))
        return self.conv2(self.drop(self.act2(self.norm2(x))))


class PCTBlock(nn.Module):
    """Parallel convolution + windowed-attention block; branch outputs are summed.

    The attention branch is two pre-norm transformer sub-blocks (P-MSA then
    SP-MSA) followed by a pointwise output projection, so either branch can be
    silenced for structural probes by zeroing its final layer.
    """

    def __init__(
        self,
        channels: int,
        window: tuple[int, int, int],
        num_heads: int,
        mlp_ratio: float = 4.0,
        dropout: float = 0.0,
        shift: tuple[int, int, int] | None = None,
    ):
        super().__init__()
        self.conv_branch = ConvBlock(channels, two_d=False, dropout=dropout)
        self.attn1 = AttentionSubBlock(
            channels, window, num_heads, shifted=False, mlp_ratio=mlp_ratio, dropout=dropout
        )
        self.attn2 = AttentionSubBlock(
            channels, window, num_heads, shifted=True, mlp_ratio=mlp_ratio,
            dropout=dropout, shift=shift,
        )
        self.attn_proj = nn.Conv3d(channels, channels, 1)

    def attn_branch(self, x: torch.Tensor) -> torch.Tensor:
        y = x.permute(0, 2, 3, 4, 1)  # channels-last for attention
        y = self.attn2(self.attn1(y))
        return self.attn_proj(y.permute(0, 4, 1, 2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv_branch(x) + self.attn_branch(x)


class Downsample(nn.Module):
    """Strided convolution; stride (1,2,2) at the first transition, (2,2,2) later."""

    def __init__(self, in_ch: int, out_ch: int, stride: tuple[int, int, int]):
        super().__init__()
        self.conv = nn.Conv3d(in_ch, out_ch, kernel_size=stride, stride=stride)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: tuple[int, int, int]):
        super().__init__()
        self.conv = nn.ConvTranspose3d(in_ch, out_ch, kernel_size=stride, stride=stride)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class SkipFusion(nn.Module):
    """Concatenate decoder features with the skip connection, then fuse by conv."""

    def __init__(self, channels: int, two_d: bool = False):
        super().__init__()
        self.conv = nn.Conv3d(2 * channels, channels, _kernel(two_d), padding=_padding(two_d))

    def forward(self, up: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        return self.conv(torch.cat([up, skip], dim=1))


class PredictionHead(nn.Module):
    """Pointwise conv to class logits; optional depth pooling aligns auxiliary
    outputs to uniform dyadic scales (the H/W ladder halves once more than depth)."""

    def __init__(self, channels: int, num_classes: int, pool_depth: bool):
        super().__init__()
        self.conv = nn.Conv3d(channels, num_classes, 1)
        self.pool = nn.AvgPool3d((2, 1, 1)) if pool_depth else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.conv(x))
