"""Volume-fusion pretext sample factory.

A pretraining example is built by blending a foreground sub-volume into a
background sub-volume with a per-voxel discrete coefficient: voxels with
class c in {0..K} get blend weight c/K, so X = (Y/K) * I_f + (1 - Y/K) * I_b
and the class map Y doubles as the segmentation ground truth. Coefficient
maps are unions of sequentially placed axis-aligned box patches; overlaps
keep the most recent patch's class, which yields irregular per-class regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CorpusTooSmall,
    InvalidParams,
    SameScanViolation,
    ShapeMismatch,
    VolumeTooSmall,
)
from .io import LabelVolume, Volume

INDETERMINATE = -1


@dataclass
class FusionParams:
    K: int = 4
    m0: int = 10
    m1: int = 40
    patch_depth_range: tuple[int, int] = (8, 40)
    patch_height_range: tuple[int, int] = (8, 80)
    patch_width_range: tuple[int, int] = (8, 80)
    subvolume_shape: tuple[int, int, int] = (64, 128, 128)

    def validate(self) -> None:
        if self.K < 1:
            raise InvalidParams(f"K must be >= 1, got {self.K}")
        if not (1 <= self.m0 <= self.m1):
            raise InvalidParams(f"need 1 <= m0 <= m1, got ({self.m0}, {self.m1})")
        for rng_, dim, name in zip(
            self.patch_ranges, self.subvolume_shape, ("depth", "height", "width")
        ):
            lo, hi = rng_
            if not (1 <= lo <= hi <= dim):
                raise InvalidParams(
                    f"patch {name} range {rng_} not within [1, {dim}]"
                )

    @property
    def patch_ranges(self) -> tuple[tuple[int, int], ...]:
        return (self.patch_depth_range, self.patch_height_range, self.patch_width_range)

    @property
    def num_classes(self) -> int:
        return self.K + 1


@dataclass
class CoefficientMap:
    """Integer class grid; class c encodes fusion coefficient c / K."""

    classes: np.ndarray
    K: int

    def __post_init__(self):
        self.classes = np.asarray(self.classes)
        if self.classes.min(initial=0) < 0 or self.classes.max(initial=0) > self.K:
            raise InvalidParams(f"classes outside [0, {self.K}]")

    @property
    def alpha(self) -> np.ndarray:
        return self.classes.astype(np.float32) / np.float32(self.K)


@dataclass
class FusedSample:
    X: Volume
    Y: LabelVolume
    provenance: tuple[str, str, int]


def crop_subvolume(
    v: Volume,
    shape: tuple[int, int, int],
    rng: np.random.Generator,
    pad_undersized: bool = False,
) -> Volume:
    """Uniform random contiguous crop of exactly `shape` from v.

    Undersized axes are zero-padded symmetrically when pad_undersized is set,
    otherwise VolumeTooSmall is raised.
    """
    voxels = v.voxels
    if any(vs < s for vs, s in zip(voxels.shape, shape)):
        if not pad_undersized:
            raise VolumeTooSmall(f"volume {voxels.shape} smaller than crop {shape}")
        pads = []
        for vs, s in zip(voxels.shape, shape):
            extra = max(0, s - vs)
            pads.append((extra // 2, extra - extra // 2))
        voxels = np.pad(voxels, pads, mode="constant")
    origin = [int(rng.integers(0, vs - s + 1)) for vs, s in zip(voxels.shape, shape)]
    sl = tuple(slice(o, o + s) for o, s in zip(origin, shape))
    return Volume(voxels=voxels[sl].copy(), spacing=v.spacing, id=v.id)


def generate_coefficient_map(params: FusionParams, rng: np.random.Generator) -> CoefficientMap:
    """Zero-initialized grid with M ~ U{m0..m1} random box patches placed sequentially.

    Each patch gets uniform size components from the configured ranges, a
    uniform origin keeping it fully inside, and a uniform class in {1..K};
    later patches overwrite earlier ones.
    """
    params.validate()
    shape = params.subvolume_shape
    classes = np.zeros(shape, dtype=np.int64)
    m = int(rng.integers(params.m0, params.m1 + 1))
    for _ in range(m):
        size = [int(rng.integers(lo, hi + 1)) for lo, hi in params.patch_ranges]
        origin = [int(rng.integers(0, dim - s + 1)) for dim, s in zip(shape, size)]
        cls = int(rng.integers(1, params.K + 1))
        sl = tuple(slice(o, o + s) for o, s in zip(origin, size))
        classes[sl] = cls
    return CoefficientMap(classes=classes, K=params.K)


def fuse(
    I_b: Volume,
    I_f: Volume,
    cmap: CoefficientMap,
    allow_same_scan: bool = False,
    provenance_seed: int = 0,
) -> FusedSample:
    """Blend I_f into I_b per the coefficient map: X = alpha*I_f + (1-alpha)*I_b."""
    if I_b.shape != I_f.shape or I_b.shape != cmap.classes.shape:
        raise ShapeMismatch(
            f"shapes differ: bg {I_b.shape}, fg {I_f.shape}, cmap {cmap.classes.shape}"
        )
    if I_b.id == I_f.id and not allow_same_scan:
        raise SameScanViolation(
            f"background and foreground come from the same scan {I_b.id!r}"
        )
    alpha = cmap.alpha
    x = alpha * I_f.voxels.astype(np.float32) + (1.0 - alpha) * I_b.voxels.astype(np.float32)
    X = Volume(voxels=x, spacing=I_b.spacing, id=f"fused({I_b.id},{I_f.id})")
    Y = LabelVolume(
        labels=cmap.classes.copy(),
        num_classes=cmap.K + 1,
        spacing=I_b.spacing,
        id=X.id,
    )
    return FusedSample(X=X, Y=Y, provenance=(I_b.id, I_f.id, provenance_seed))


def make_pretrain_batch(
    corpus: list[Volume],
    params: FusionParams,
    B: int,
    rng: np.random.Generator,
    pad_undersized: bool = False,
) -> list[FusedSample]:
    """B independent fused samples from freshly drawn distinct scan pairs."""
    if len(corpus) < 2:
        raise CorpusTooSmall(f"need >= 2 scans, have {len(corpus)}")
    if B < 1:
        raise InvalidParams(f"batch size must be >= 1, got {B}")
    samples = []
    for b, child in enumerate(rng.spawn(B)):
        i, j = child.choice(len(corpus), size=2, replace=False)
        bg = crop_subvolume(corpus[int(i)], params.subvolume_shape, child, pad_undersized)
        fg = crop_subvolume(corpus[int(j)], params.subvolume_shape, child, pad_undersized)
        cmap = generate_coefficient_map(params, child)
        samples.append(fuse(bg, fg, cmap, provenance_seed=b))
    return samples


def recover_labels_oracle(
    X: Volume,
    I_b: Volume,
    I_f: Volume,
    K: int,
    tau: float | None = None,
) -> np.ndarray:
    """Invert the fusion equation voxelwise to recover the class map.

    Where the sources differ by more than tau the class is
    round(K * (X - I_b) / (I_f - I_b)); elsewhere the blend weight is
    unidentifiable pointwise and the voxel gets the INDETERMINATE sentinel.
    Default tau = 1/(4K): half the gap between adjacent coefficient levels
    times the minimum contrast needed for unambiguous rounding.
    """
    if X.shape != I_b.shape or X.shape != I_f.shape:
        raise ShapeMismatch(f"shapes differ: X {X.shape}, bg {I_b.shape}, fg {I_f.shape}")
    if tau is None:
        tau = 1.0 / (4.0 * K)
    diff = I_f.voxels.astype(np.float64) - I_b.voxels.astype(np.float64)
    determinate = np.abs(diff) > tau
    labels = np.full(X.shape, INDETERMINATE, dtype=np.int64)
    num = X.voxels.astype(np.float64) - I_b.voxels.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.rint(K * num / diff)
    est = np.clip(est, 0, K)
    labels[determinate] = est[determinate].astype(np.int64)
    return labels
