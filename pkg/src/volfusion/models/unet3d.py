"""3D U-Net baseline with the same resolution ladder, channel widths and
four-scale prediction heads as PCT-Net, so ablations isolate the PCT block."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeIncompatible
from .blocks import ConvBlock, Downsample, PredictionHead, SkipFusion, Upsample


class UNet3D(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3, c4, c5 = cfg.level_channels
        C = cfg.num_classes
        drop = cfg.dropout_rate

        self.proj = nn.Conv3d(cfg.in_channels, c1, (1, 3, 3), padding=(0, 1, 1))
        self.enc1 = ConvBlock(c1, two_d=True)
        self.down12 = Downsample(c1, c2, stride=(1, 2, 2))
        self.enc2 = ConvBlock(c2)
        self.down23 = Downsample(c2, c3, stride=(2, 2, 2))
        self.enc3 = ConvBlock(c3, dropout=drop)
        self.down34 = Downsample(c3, c4, stride=(2, 2, 2))
        self.enc4 = ConvBlock(c4, dropout=drop)
        self.down45 = Downsample(c4, c5, stride=(2, 2, 2))
        self.bottleneck = ConvBlock(c5, dropout=drop)

        self.up54 = Upsample(c5, c4, stride=(2, 2, 2))
        self.fuse4 = SkipFusion(c4)
        self.dec4 = ConvBlock(c4, dropout=drop)
        self.up43 = Upsample(c4, c3, stride=(2, 2, 2))
        self.fuse3 = SkipFusion(c3)
        self.dec3 = ConvBlock(c3, dropout=drop)
        self.up32 = Upsample(c3, c2, stride=(2, 2, 2))
        self.fuse2 = SkipFusion(c2)
        self.dec2 = ConvBlock(c2)
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
        self.check_input(x)
        f1 = self.enc1(self.proj(x))
        f2 = self.enc2(self.down12(f1))
        e3 = self.enc3(self.down23(f2))
        e4 = self.enc4(self.down34(e3))
        b = self.bottleneck(self.down45(e4))
        d4 = self.dec4(self.fuse4(self.up54(b), e4))
        d3 = self.dec3(self.fuse3(self.up43(d4), e3))
        d2 = self.dec2(self.fuse2(self.up32(d3), f2))
        d1 = self.dec1(self.fuse1(self.up21(d2), f1))
        logits = [self.head1(d1), self.head2(d2), self.head3(d3), self.head4(d4)]
        return [F.softmax(z, dim=1) for z in logits]
