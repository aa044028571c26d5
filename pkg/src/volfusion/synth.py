"""Synthetic CT-like phantom volumes for running the pipeline without clinical data.

Phantoms are composed of axis-aligned geometric primitives (ellipsoids, boxes,
tubes) rasterized into a textured background. Each primitive kind maps to one
label class so the same generator also yields downstream segmentation targets.
Generation is a pure function of (spec, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidSpec, IoFailure
from .io import LabelVolume, Volume, save_volume

SHAPE_KINDS = ("ellipsoid", "box", "tube")


@dataclass
class PhantomSpec:
    shape: tuple[int, int, int] = (32, 64, 64)
    num_shapes: tuple[int, int] = (4, 10)
    shape_kinds: tuple[str, ...] = SHAPE_KINDS
    intensity_ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {
            "ellipsoid": (0.45, 0.75),
            "box": (0.7, 1.0),
            "tube": (0.3, 0.55),
        }
    )
    background_texture: str = "smooth-noise"
    background_range: tuple[float, float] = (0.0, 0.35)
    correlation_length: int = 8
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def validate(self) -> None:
        if len(self.shape) != 3 or any(s < 16 for s in self.shape):
            raise InvalidSpec(f"shape components must be >= 16, got {self.shape}")
        lo, hi = self.num_shapes
        if lo < 0 or hi < lo:
            raise InvalidSpec(f"empty num_shapes range {self.num_shapes}")
        if not self.shape_kinds or any(k not in SHAPE_KINDS for k in self.shape_kinds):
            raise InvalidSpec(f"shape_kinds must be a non-empty subset of {SHAPE_KINDS}")
        for k in self.shape_kinds:
            a, b = self.intensity_ranges[k]
            if not (0.0 <= a <= b <= 1.0):
                raise InvalidSpec(f"intensity range for {k} not within [0,1]: {(a, b)}")
        a, b = self.background_range
        if not (0.0 <= a <= b <= 1.0):
            raise InvalidSpec(f"background range not within [0,1]: {(a, b)}")
        if self.background_texture not in ("constant", "smooth-noise"):
            raise InvalidSpec(f"unknown background texture {self.background_texture!r}")

    @property
    def num_classes(self) -> int:
        return len(self.shape_kinds) + 1


@dataclass
class ShapeInstance:
    """One rasterizable primitive; class_id indexes the kind (background is 0)."""

    kind: str
    class_id: int
    intensity: float
    params: dict


def inside_mask(shape: tuple[int, int, int], inst: ShapeInstance) -> np.ndarray:
    """Boolean inside-test for one primitive, evaluated on the full voxel grid."""
    d, h, w = np.ogrid[: shape[0], : shape[1], : shape[2]]
    p = inst.params
    if inst.kind == "ellipsoid":
        c, r = p["center"], p["radii"]
        return (
            ((d - c[0]) / r[0]) ** 2 + ((h - c[1]) / r[1]) ** 2 + ((w - c[2]) / r[2]) ** 2
        ) <= 1.0
    if inst.kind == "box":
        lo, hi = p["lo"], p["hi"]
        return (
            (d >= lo[0]) & (d < hi[0])
            & (h >= lo[1]) & (h < hi[1])
            & (w >= lo[2]) & (w < hi[2])
        )
    if inst.kind == "tube":
        axis, c, r = p["axis"], p["center"], p["radius"]
        lo, hi = p["extent"]
        coords = [d, h, w]
        cross = [i for i in range(3) if i != axis]
        u, v = coords[cross[0]], coords[cross[1]]
        circ = ((u - c[cross[0]]) / r) ** 2 + ((v - c[cross[1]]) / r) ** 2 <= 1.0
        along = (coords[axis] >= lo) & (coords[axis] < hi)
        return circ & along
    raise InvalidSpec(f"unknown shape kind {inst.kind!r}")


def sample_shapes(spec: PhantomSpec, rng: np.random.Generator) -> list[ShapeInstance]:
    spec.validate()
    D, H, W = spec.shape
    n = int(rng.integers(spec.num_shapes[0], spec.num_shapes[1] + 1))
    out = []
    for _ in range(n):
        kind = spec.shape_kinds[int(rng.integers(len(spec.shape_kinds)))]
        class_id = spec.shape_kinds.index(kind) + 1
        intensity = float(rng.uniform(*spec.intensity_ranges[kind]))
        if kind == "ellipsoid":
            radii = rng.uniform([2, 3, 3], [D / 4, H / 4, W / 4])
            center = rng.uniform(radii, np.array([D, H, W]) - radii)
            params = {"center": tuple(center), "radii": tuple(radii)}
        elif kind == "box":
            size = rng.integers([3, 4, 4], [max(4, D // 3), max(5, H // 3), max(5, W // 3)])
            lo = np.array([rng.integers(0, s - z + 1) for s, z in zip((D, H, W), size)])
            params = {"lo": tuple(lo.tolist()), "hi": tuple((lo + size).tolist())}
        else:  # tube
            axis = int(rng.integers(3))
            radius = float(rng.uniform(1.5, min(H, W) / 8))
            center = rng.uniform([radius] * 3, np.array([D, H, W]) - radius)
            length = int(rng.integers(spec.shape[axis] // 3, spec.shape[axis] + 1))
            lo = int(rng.integers(0, spec.shape[axis] - length + 1))
            params = {
                "axis": axis,
                "center": tuple(center),
                "radius": radius,
                "extent": (lo, lo + length),
            }
        out.append(ShapeInstance(kind=kind, class_id=class_id, intensity=intensity, params=params))
    return out


def _background(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.background_range
    if spec.background_texture == "constant":
        return np.full(spec.shape, (lo + hi) / 2.0, dtype=np.float32)
    # value noise: coarse uniform grid, trilinear upsampling, rescale to range
    coarse_shape = [max(2, s // spec.correlation_length) for s in spec.shape]
    coarse = rng.random(coarse_shape)
    zoom = [t / c for t, c in zip(spec.shape, coarse_shape)]
    noise = ndimage.zoom(coarse, zoom, order=1, mode="nearest", grid_mode=True)
    noise = noise[: spec.shape[0], : spec.shape[1], : spec.shape[2]]
    nmin, nmax = noise.min(), noise.max()
    if nmax > nmin:
        noise = (noise - nmin) / (nmax - nmin)
    return (lo + (hi - lo) * noise).astype(np.float32)


def rasterize(
    shape: tuple[int, int, int],
    shapes: list[ShapeInstance],
    background: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Paint primitives over the background sequentially; later shapes overwrite."""
    voxels = background.astype(np.float32).copy()
    labels = np.zeros(shape, dtype=np.int64)
    for inst in shapes:
        m = inside_mask(shape, inst)
        voxels[m] = inst.intensity
        labels[m] = inst.class_id
    return voxels, labels


def generate_phantom(
    spec: PhantomSpec, rng: np.random.Generator | int | None = None, id: str = "phantom"
) -> tuple[Volume, LabelVolume]:
    spec.validate()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(spec.seed if rng is None else rng)
    shapes = sample_shapes(spec, rng)
    voxels, labels = rasterize(spec.shape, shapes, _background(spec, rng))
    vol = Volume(voxels=voxels, spacing=spec.spacing, id=id)
    lab = LabelVolume(labels=labels, num_classes=spec.num_classes, spacing=spec.spacing, id=id)
    return vol, lab


# ---------------------------------------------------------------------------
# corpus on disk
# ---------------------------------------------------------------------------

def write_manifest(path: str, entries: list[tuple[str, ...]]) -> None:
    with open(path, "w") as f:
        for entry in entries:
            f.write("\t".join(entry) + "\n")


def read_manifest(path: str) -> list[tuple[str, ...]]:
    entries = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                entries.append(tuple(line.split("\t")))
    return entries


def generate_corpus(
    spec: PhantomSpec,
    n: int,
    out_dir: str,
    with_labels: bool = False,
    format: str = "raw+meta",
) -> str:
    """Write n phantoms (each with a seed derived from its index) plus a manifest.

    Manifest lines are ``id<TAB>path`` (``id<TAB>path<TAB>label_path`` when
    labels are written). Returns the manifest path.
    """
    if n < 1:
        raise InvalidSpec(f"corpus size must be >= 1, got {n}")
    spec.validate()
    ext = ".raw" if format == "raw+meta" else ".nii.gz"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e
    entries = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        vid = f"phantom_{i:04d}"
        vol, lab = generate_phantom(spec, rng, id=vid)
        vpath = os.path.join(out_dir, vid + ext)
        save_volume(vol, vpath, format=format)
        if with_labels:
            lpath = os.path.join(out_dir, vid + "_label" + ext)
            save_volume(lab, lpath, format=format)
            entries.append((vid, vpath, lpath))
        else:
            entries.append((vid, vpath))
    manifest = os.path.join(out_dir, "manifest.tsv")
    write_manifest(manifest, entries)
    return manifest
