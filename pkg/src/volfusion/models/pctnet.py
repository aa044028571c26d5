"""PCT-Net: a hybrid convolution / windowed-attention encoder-decoder.

Resolution ladder for input (D, H, W) with level channels (c1..c5):

    level 1: c1 @ (D,   H,   W)    2D conv block (embedding)
    level 2: c2 @ (D,   H/2, W/2)  3D conv block (embedding)
    level 3: c3 @ (D/2, H/4, W/4)  PCT block
    level 4: c4 @ (D/4, H/8, W/8)  PCT block
    level 5: c5 @ (D/8, H/16,W/16) PCT block (bottleneck)

The decoder mirrors the ladder with transposed-conv upsampling and
concatenation + convolution skip fusion. Four prediction heads emit
probability maps at uniform dyadic scales 1, 1/2, 1/4 and 1/8 of the input:
full resolution from decoder level 1, and depth-pooled pointwise predictions
from decoder levels 2, 3 and 4.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeIncompatible
from .blocks import ConvBlock, Downsample, PCTBlock, PredictionHead, SkipFusion, Upsample


class EmbeddingModule(nn.Module):
    """Two-level convolutional feature embedding: 2D block at full resolution,
    2D downsampling, then a 3D block."""

    def __init__(self, in_channels: int, c1: int, c2: int):
        super().__init__()
        self.proj = nn.Conv3d(in_channels, c1, (1, 3, 3), padding=(0, 1, 1))
        self.block1 = ConvBlock(c1, two_d=True)
        self.down = Downsample(c1, c2, stride=(1, 2, 2))
        self.block2 = ConvBlock(c2, two_d=False)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        f1 = self.block1(self.proj(x))
        f2 = self.block2(self.down(f1))
        return f1, f2


class PCTNet(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3, c4, c5 = cfg.level_channels
        C = cfg.num_classes
        win, shift = cfg.window_size, cfg.shift_size
        h3, h4, h5 = cfg.num_heads
        mlp, drop = cfg.mlp_ratio, cfg.dropout_rate

        self.embed = EmbeddingModule(cfg.in_channels, c1, c2)
        self.down23 = Downsample(c2, c3, stride=(2, 2, 2))
        self.enc3 = PCTBlock(c3, win, h3, mlp, drop, shift)
        self.down34 = Downsample(c3, c4, stride=(2, 2, 2))
        self.enc4 = PCTBlock(c4, win, h4, mlp, drop, shift)
        self.down45 = Downsample(c4, c5, stride=(2, 2, 2))
        self.bottleneck = PCTBlock(c5, win, h5, mlp, drop, shift)

        self.up54 = Upsample(c5, c4, stride=(2, 2, 2))
        self.fuse4 = SkipFusion(c4)
        self.dec4 = PCTBlock(c4, win, h4, mlp, drop, shift)
        self.up43 = Upsample(c4, c3, stride=(2, 2, 2))
        self.fuse3 = SkipFusion(c3)
        self.dec3 = PCTBlock(c3, win, h3, mlp, drop, shift)
        self.up32 = Upsample(c3, c2, stride=(2, 2, 2))
        self.fuse2 = SkipFusion(c2)
        self.dec2 = ConvBlock(c2, two_d=False)
        self.up21 = Upsample(c2, c1, stride=(1, 2, 2))
        self.fuse1 = SkipFusion(c1, two_d=True)
        self.dec1 = ConvBlock(c1, two_d=True)

        self.head1 = PredictionHead(c1, C, pool_depth=False)
        self.head2 = PredictionHead(c2, C, pool_depth=True)
        self.head3 = PredictionHead(c3, C, pool_depth=True)
        self.head4 = PredictionHead(c4, C, pool_depth=True)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise ShapeIncompatible(f"expected (B, {self.cfg.in_channels}, D, H, W), got {tuple(x.shape)}")
        d, h, w = x.shape[2:]
        if d % 8 or h % 16 or w % 16:
            raise ShapeIncompatible(
                f"spatial shape {(d, h, w)} must be divisible by (8, 16, 16)"
            )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Return probability maps at scales 1, 1/2, 1/4, 1/8 (softmax applied)."""
        self.check_input(x)
        f1, f2 = self.embed(x)
        e3 = self.enc3(self.down23(f2))
        e4 = self.enc4(self.down34(e3))
        b = self.bottleneck(self.down45(e4))
        d4 = self.dec4(self.fuse4(self.up54(b), e4))
        d3 = self.dec3(self.fuse3(self.up43(d4), e3))
        d2 = self.dec2(self.fuse2(self.up32(d3), f2))
        d1 = self.dec1(self.fuse1(self.up21(d2), f1))
        logits = [self.head1(d1), self.head2(d2), self.head3(d3), self.head4(d4)]
        return [F.softmax(z, dim=1) for z in logits]
