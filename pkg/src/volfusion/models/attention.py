"""3D windowed multi-head self-attention.

P-MSA evaluates self-attention independently inside non-overlapping
(wd, wh, ww) windows of the feature volume. SP-MSA is the shifted variant:
features are cyclically rolled by half a window before partitioning and
rolled back afterwards, with an additive mask that blocks attention between
positions that were not spatial neighbors before the shift. Feature maps are
padded up to window multiples internally.
"""

from __future__ import annotations

import itertools

import torch
import torch.nn as nn
import torch.nn.functional as F


def window_partition(x: torch.Tensor, window: tuple[int, int, int]) -> torch.Tensor:
    """(B, D, H, W, C) -> (B * nWindows, wd*wh*ww, C)."""
    B, D, H, W, C = x.shape
    wd, wh, ww = window
    x = x.view(B, D // wd, wd, H // wh, wh, W // ww, ww, C)
    x = x.permute(0, 1, 3, 5, 2, 4, 6, 7).contiguous()
    return x.view(-1, wd * wh * ww, C)


def window_reverse(
    win: torch.Tensor, window: tuple[int, int, int], B: int, D: int, H: int, W: int
) -> torch.Tensor:
    """Inverse of window_partition."""
    wd, wh, ww = window
    x = win.view(B, D // wd, H // wh, W // ww, wd, wh, ww, -1)
    x = x.permute(0, 1, 4, 2, 5, 3, 6, 7).contiguous()
    return x.view(B, D, H, W, -1)


def _relative_position_index(window: tuple[int, int, int]) -> torch.Tensor:
    coords = torch.stack(
        torch.meshgrid(*(torch.arange(w) for w in window), indexing="ij")
    ).flatten(1)  # (3, N)
    rel = coords[:, :, None] - coords[:, None, :]  # (3, N, N)
    rel = rel.permute(1, 2, 0).contiguous()
    for i, w in enumerate(window):
        rel[:, :, i] += w - 1
    strides = ((2 * window[1] - 1) * (2 * window[2] - 1), 2 * window[2] - 1, 1)
    return (rel * torch.tensor(strides)).sum(-1)  # (N, N)


class WindowAttention(nn.Module):
    """Multi-head self-attention within one window, with learned relative position bias."""

    def __init__(self, dim: int, window: tuple[int, int, int], num_heads: int):
        super().__init__()
        self.dim = dim
        self.window = tuple(window)
        self.num_heads = num_heads
        head_dim = dim // num_heads
        self.scale = head_dim**-0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        n_bias = (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1)
        self.relative_position_bias_table = nn.Parameter(torch.zeros(n_bias, num_heads))
        nn.init.trunc_normal_(self.relative_position_bias_table, std=0.02)
        self.register_buffer(
            "relative_position_index", _relative_position_index(self.window), persistent=False
        )

    def forward(
        self,
        x: torch.Tensor,
        mask: torch.Tensor | None = None,
        return_attn: bool = False,
    ):
        Bw, N, C = x.shape
        qkv = self.qkv(x).reshape(Bw, N, 3, self.num_heads, C // self.num_heads)
        qkv = qkv.permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        bias = self.relative_position_bias_table[self.relative_position_index.view(-1)]
        bias = bias.view(N, N, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nW = mask.shape[0]
            attn = attn.view(Bw // nW, nW, self.num_heads, N, N) + mask[None, :, None]
            attn = attn.view(Bw, self.num_heads, N, N)
        attn = F.softmax(attn, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(Bw, N, C)
        out = self.proj(out)
        if return_attn:
            return out, attn
        return out


def shift_attention_mask(
    dhw: tuple[int, int, int],
    window: tuple[int, int, int],
    shift: tuple[int, int, int],
    device,
) -> torch.Tensor:
    """Additive (-inf style) mask preventing cross-boundary attention after a cyclic shift."""
    D, H, W = dhw
    img_mask = torch.zeros(1, D, H, W, 1, device=device)
    cnt = 0
    ranges = []
    for dim, w, s in zip(dhw, window, shift):
        if s == 0:
            ranges.append([slice(0, dim)])
        else:
            ranges.append([slice(0, dim - w), slice(dim - w, dim - s), slice(dim - s, dim)])
    for sd, sh, sw in itertools.product(*ranges):
        img_mask[:, sd, sh, sw, :] = cnt
        cnt += 1
    win = window_partition(img_mask, window).squeeze(-1)  # (nW, N)
    diff = win.unsqueeze(1) - win.unsqueeze(2)
    return torch.where(diff == 0, 0.0, -100.0)


class PMSA(nn.Module):
    """Windowed self-attention over a (B, D, H, W, C) feature volume.

    With shifted=True the SP-MSA variant is applied. A zero shift size makes
    the shifted variant collapse to plain P-MSA exactly.
    """

    def __init__(
        self,
        dim: int,
        window: tuple[int, int, int],
        num_heads: int,
        shifted: bool = False,
        shift: tuple[int, int, int] | None = None,
    ):
        super().__init__()
        self.window = tuple(window)
        self.shift = tuple(shift) if shift is not None else tuple(w // 2 for w in window)
        self.shifted = shifted
        self.attn = WindowAttention(dim, self.window, num_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, D, H, W, C = x.shape
        pad = [(-s) % w for s, w in zip((D, H, W), self.window)]
        if any(pad):
            x = F.pad(x, (0, 0, 0, pad[2], 0, pad[1], 0, pad[0]))
        Dp, Hp, Wp = x.shape[1:4]
        # never shift by more than the (padded) extent allows, and a window
        # that spans the whole axis needs no shift at all
        shift = tuple(
            0 if w >= e else s for s, w, e in zip(self.shift, self.window, (Dp, Hp, Wp))
        ) if self.shifted else (0, 0, 0)
        if any(shift):
            x = torch.roll(x, shifts=[-s for s in shift], dims=(1, 2, 3))
            mask = shift_attention_mask((Dp, Hp, Wp), self.window, shift, x.device)
        else:
            mask = None
        win = window_partition(x, self.window)
        win = self.attn(win, mask=mask)
        x = window_reverse(win, self.window, B, Dp, Hp, Wp)
        if any(shift):
            x = torch.roll(x, shifts=list(shift), dims=(1, 2, 3))
        if any(pad):
            x = x[:, :D, :H, :W, :]
        return x


class Mlp(nn.Module):
    def __init__(self, dim: int, mlp_ratio: float = 4.0, dropout: float = 0.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.drop(F.gelu(self.fc1(x))))


class AttentionSubBlock(nn.Module):
    """Pre-norm transformer sub-block: x + MSA(LN(x)); x + MLP(LN(x))."""

    def __init__(
        self,
        dim: int,
        window: tuple[int, int, int],
        num_heads: int,
        shifted: bool,
        mlp_ratio: float = 4.0,
        dropout: float = 0.0,
        shift: tuple[int, int, int] | None = None,
    ):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.msa = PMSA(dim, window, num_heads, shifted=shifted, shift=shift)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio, dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.msa(self.norm1(x))
        return x + self.mlp(self.norm2(x))
