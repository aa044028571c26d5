"""Segmentation losses: soft Dice, cross entropy, their average, and the
four-scale deep-supervision aggregate.

Probability maps are tensors with the class channel in dim -4, i.e.
(C, D, H, W) or (B, C, D, H, W). Labels are integer tensors of the matching
spatial shape. The supervised loss is the plain average
0.5 * dice + 0.5 * cross_entropy.

Two soft-Dice variants are provided. The default "aggregated" form sums
intersection and union over voxels before taking the per-class ratio, so a
perfect prediction scores ~0. The "literal-per-voxel" form averages the
per-voxel ratio 2*p*y/(p+y+eps); at a perfect one-hot prediction it evaluates
to 1 - 1/C because each voxel only contributes for its own class, which makes
it unsuitable as a training default and it is kept for fidelity experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidConfig, LabelOutOfRange, ScaleMismatch, ShapeMismatch
from .io import LabelVolume

LOG_FLOOR = 1e-12


@dataclass
class LossConfig:
    epsilon: float = 1e-5
    dice_form: str = "aggregated"
    ds_weights: tuple[float, float, float, float] = (8 / 15, 4 / 15, 2 / 15, 1 / 15)

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise InvalidConfig(f"epsilon must be > 0, got {self.epsilon}")
        if self.dice_form not in ("aggregated", "literal-per-voxel"):
            raise InvalidConfig(f"unknown dice_form {self.dice_form!r}")
        if len(self.ds_weights) != 4 or any(w <= 0 for w in self.ds_weights):
            raise InvalidConfig(f"need 4 positive deep-supervision weights, got {self.ds_weights}")
        if abs(sum(self.ds_weights) - 1.0) > 1e-6:
            raise InvalidConfig(f"deep-supervision weights must sum to 1, got {sum(self.ds_weights)}")


def _to_label_tensor(y) -> torch.Tensor:
    if isinstance(y, LabelVolume):
        y = y.labels
    if isinstance(y, np.ndarray):
        y = torch.from_numpy(np.ascontiguousarray(y))
    return y.long()


def one_hot(y, C: int) -> torch.Tensor:
    """One-hot encode integer labels; channel axis ends up in dim -4."""
    t = _to_label_tensor(y)
    if t.numel() and (t.min() < 0 or t.max() >= C):
        raise LabelOutOfRange(
            f"labels in [{int(t.min())}, {int(t.max())}] out of range for C={C}"
        )
    oh = torch.nn.functional.one_hot(t, C).to(torch.float32)
    return oh.movedim(-1, -4)


def validate_probability_map(p: torch.Tensor, atol: float = 1e-5) -> None:
    if p.min() < -atol or p.max() > 1 + atol:
        raise ShapeMismatch("probabilities outside [0, 1]")
    sums = p.sum(dim=-4)
    if (sums - 1.0).abs().max() > atol:
        raise ShapeMismatch("per-voxel channel sums differ from 1")


def _check_shapes(p: torch.Tensor, y: torch.Tensor) -> None:
    if p.shape != y.shape:
        raise ShapeMismatch(f"prediction {tuple(p.shape)} vs target {tuple(y.shape)}")


def dice_loss(p: torch.Tensor, y: torch.Tensor, cfg: LossConfig | None = None) -> torch.Tensor:
    """Soft Dice loss between a probability map and a (one-hot) target map."""
    cfg = cfg or LossConfig()
    cfg.validate()
    _check_shapes(p, y)
    eps = cfg.epsilon
    c = p.shape[-4]
    # flatten batch (if any) and space into the voxel axis, per class
    pc = p.movedim(-4, 0).reshape(c, -1)
    yc = y.movedim(-4, 0).reshape(c, -1)
    if cfg.dice_form == "aggregated":
        inter = (pc * yc).sum(dim=1)
        denom = pc.sum(dim=1) + yc.sum(dim=1)
        return 1.0 - ((2.0 * inter + eps) / (denom + eps)).mean()
    ratio = 2.0 * pc * yc / (pc + yc + eps)
    return 1.0 - ratio.mean()


def ce_loss(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Cross entropy: mean over voxels of -log p at the true class."""
    _check_shapes(p, y)
    logp = torch.log(p.clamp_min(LOG_FLOOR))
    per_voxel = -(y * logp).sum(dim=-4)
    return per_voxel.mean()


def supervised_loss(p: torch.Tensor, Y, cfg: LossConfig | None = None) -> torch.Tensor:
    """0.5 * dice + 0.5 * cross entropy against integer labels (or one-hot maps)."""
    cfg = cfg or LossConfig()
    if isinstance(Y, torch.Tensor) and Y.dtype.is_floating_point:
        y = Y
    else:
        y = one_hot(Y, p.shape[-4]).to(p.dtype)
        if y.ndim != p.ndim:
            raise ShapeMismatch(f"prediction {tuple(p.shape)} vs labels {tuple(y.shape)}")
    return 0.5 * dice_loss(p, y, cfg) + 0.5 * ce_loss(p, y)


def downsample_labels(Y, factor: int) -> torch.Tensor:
    """Nearest-neighbor label downsampling by an integer dyadic factor."""
    t = _to_label_tensor(Y)
    return t[..., ::factor, ::factor, ::factor]


def deep_supervision_loss(preds, Y, cfg: LossConfig | None = None) -> torch.Tensor:
    """Weighted sum of supervised losses at scales 1, 1/2, 1/4, 1/8."""
    cfg = cfg or LossConfig()
    cfg.validate()
    if len(preds) != 4:
        raise ScaleMismatch(f"expected 4 predictions, got {len(preds)}")
    t = _to_label_tensor(Y)
    total = None
    for s, (w, p) in enumerate(zip(cfg.ds_weights, preds)):
        ys = downsample_labels(t, 2**s)
        if tuple(p.shape[-3:]) != tuple(ys.shape[-3:]):
            raise ScaleMismatch(
                f"scale 1/{2**s}: prediction {tuple(p.shape[-3:])} vs labels {tuple(ys.shape[-3:])}"
            )
        term = w * supervised_loss(p, ys, cfg)
        total = term if total is None else total + term
    return total
