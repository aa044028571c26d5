"""3D volume I/O and intensity preprocessing.

Axis convention is (D, H, W) everywhere in memory; format adapters reorder
at the boundary. Two on-disk formats are supported:

* NIfTI-1 (``.nii`` / ``.nii.gz``), single-file, scalar types u8/i16/f32.
  On disk the fastest-varying axis is x (width), so arrays are stored as
  (W, H, D) and transposed on load/save.
* raw+meta: ``<name>.raw`` holds the little-endian scalar payload in
  (D, H, W) C-order; ``<name>.meta`` is a text sidecar with ``key=value``
  lines (keys: shape, spacing, dtype in {f32, u8, i16}).
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateWindow,
    FileMissing,
    IoFailure,
    MalformedHeader,
    NonPositiveSpacing,
)

_DTYPE_NAMES = {"f32": np.float32, "u8": np.uint8, "i16": np.int16}
_NIFTI_CODES = {2: np.uint8, 4: np.int16, 16: np.float32}
_NIFTI_CODE_OF = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.float32): 16}


@dataclass
class Volume:
    """A 3D scalar grid with physical voxel spacing in mm, (D, H, W) order."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    id: str = ""

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        if self.voxels.ndim != 3:
            raise MalformedHeader(f"expected 3D voxel grid, got ndim={self.voxels.ndim}")
        if not np.all(np.isfinite(self.voxels)):
            raise MalformedHeader("volume contains non-finite voxels")
        self.spacing = tuple(float(s) for s in self.spacing)
        if any(s <= 0 for s in self.spacing):
            raise NonPositiveSpacing(f"spacing must be positive, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape


@dataclass
class LabelVolume:
    """A 3D integer class grid; labels in [0, num_classes - 1]."""

    labels: np.ndarray
    num_classes: int
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    id: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise MalformedHeader(f"expected 3D label grid, got ndim={self.labels.ndim}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise MalformedHeader(f"labels must be integers, got {self.labels.dtype}")
        if self.num_classes < 1:
            raise MalformedHeader("num_classes must be >= 1")
        lo, hi = int(self.labels.min(initial=0)), int(self.labels.max(initial=0))
        if lo < 0 or hi >= self.num_classes:
            raise MalformedHeader(
                f"labels outside [0, {self.num_classes - 1}]: range [{lo}, {hi}]"
            )
        self.spacing = tuple(float(s) for s in self.spacing)
        if any(s <= 0 for s in self.spacing):
            raise NonPositiveSpacing(f"spacing must be positive, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape


def _detect_format(path: str) -> str:
    if path.endswith(".nii") or path.endswith(".nii.gz"):
        return "nifti"
    if path.endswith(".raw"):
        return "raw+meta"
    raise MalformedHeader(f"cannot infer format from extension: {path}")


# ---------------------------------------------------------------------------
# NIfTI-1 (minimal single-file reader/writer, enough for u8/i16/f32 volumes)
# ---------------------------------------------------------------------------

def _read_nifti(path: str) -> tuple[np.ndarray, tuple[float, float, float]]:
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e
    if len(blob) < 352:
        raise MalformedHeader(f"{path}: truncated NIfTI file")
    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != 348:
        order = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != 348:
            raise MalformedHeader(f"{path}: bad sizeof_hdr")
    dim = struct.unpack_from(order + "8h", blob, 40)
    datatype, bitpix = struct.unpack_from(order + "2h", blob, 70)
    pixdim = struct.unpack_from(order + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(order + "f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(order + "2f", blob, 112)
    magic = blob[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if dim[0] != 3:
        raise MalformedHeader(f"{path}: expected 3D image, dim[0]={dim[0]}")
    if datatype not in _NIFTI_CODES:
        raise MalformedHeader(f"{path}: unsupported datatype code {datatype}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    dtype = np.dtype(_NIFTI_CODES[datatype]).newbyteorder(order)
    offset = int(vox_offset)
    nbytes = nx * ny * nz * dtype.itemsize
    if bitpix != dtype.itemsize * 8 or len(blob) < offset + nbytes:
        raise MalformedHeader(f"{path}: payload size inconsistent with header")
    flat = np.frombuffer(blob, dtype=dtype, count=nx * ny * nz, offset=offset)
    # x varies fastest on disk: C-order reshape gives (z, y, x) == (D, H, W).
    data = flat.reshape(nz, ny, nx).copy()
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data.astype(np.float32) * slope + scl_inter
    spacing = (float(pixdim[3]), float(pixdim[2]), float(pixdim[1]))
    if any(s <= 0 for s in spacing):
        raise NonPositiveSpacing(f"{path}: non-positive pixdim {spacing}")
    return data, spacing


def _write_nifti(path: str, data: np.ndarray, spacing) -> None:
    dtype = np.dtype(data.dtype)
    if dtype not in _NIFTI_CODE_OF:
        raise IoFailure(f"unsupported on-disk dtype {dtype}")
    nz, ny, nx = data.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, _NIFTI_CODE_OF[dtype], dtype.itemsize * 8)
    struct.pack_into(
        "<8f", hdr, 76, 0.0, spacing[2], spacing[1], spacing[0], 1.0, 1.0, 1.0, 1.0
    )
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    hdr[344:348] = b"n+1\x00"
    payload = np.ascontiguousarray(data, dtype=dtype.newbyteorder("<")).tobytes()
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "wb") as f:
            f.write(bytes(hdr) + b"\x00" * 4 + payload)
    except OSError as e:
        raise IoFailure(str(e)) from e


# ---------------------------------------------------------------------------
# raw + meta sidecar
# ---------------------------------------------------------------------------

def _meta_path(raw_path: str) -> str:
    return raw_path[: -len(".raw")] + ".meta"


def _read_raw(path: str) -> tuple[np.ndarray, tuple[float, float, float]]:
    meta_path = _meta_path(path)
    if not os.path.exists(meta_path):
        raise FileMissing(f"missing sidecar {meta_path}")
    meta: dict[str, str] = {}
    with open(meta_path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedHeader(f"{meta_path}: bad line {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    try:
        shape = tuple(int(x) for x in meta["shape"].split(","))
        spacing = tuple(float(x) for x in meta["spacing"].split(","))
        dtype = _DTYPE_NAMES[meta["dtype"]]
    except (KeyError, ValueError) as e:
        raise MalformedHeader(f"{meta_path}: {e}") from e
    if len(shape) != 3 or len(spacing) != 3:
        raise MalformedHeader(f"{meta_path}: shape/spacing must have 3 components")
    if any(s <= 0 for s in spacing):
        raise NonPositiveSpacing(f"{meta_path}: spacing {spacing}")
    payload = np.fromfile(path, dtype=np.dtype(dtype).newbyteorder("<"))
    if payload.size != int(np.prod(shape)):
        raise MalformedHeader(
            f"{path}: payload has {payload.size} scalars, header wants {np.prod(shape)}"
        )
    return payload.reshape(shape), spacing


def _write_raw(path: str, data: np.ndarray, spacing) -> None:
    names = {np.dtype(v): k for k, v in _DTYPE_NAMES.items()}
    dtype = np.dtype(data.dtype)
    if dtype not in names:
        raise IoFailure(f"unsupported on-disk dtype {dtype}")
    try:
        np.ascontiguousarray(data, dtype=dtype.newbyteorder("<")).tofile(path)
        with open(_meta_path(path), "w") as f:
            f.write(f"shape={','.join(str(s) for s in data.shape)}\n")
            f.write(f"spacing={','.join(repr(float(s)) for s in spacing)}\n")
            f.write(f"dtype={names[dtype]}\n")
    except OSError as e:
        raise IoFailure(str(e)) from e


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def load_volume(path: str, format: str | None = None, id: str | None = None) -> Volume:
    """Load an intensity volume; voxel order is (D, H, W) regardless of disk order."""
    if not os.path.exists(path):
        raise FileMissing(path)
    fmt = format or _detect_format(path)
    if fmt == "nifti":
        data, spacing = _read_nifti(path)
    elif fmt == "raw+meta":
        data, spacing = _read_raw(path)
    else:
        raise MalformedHeader(f"unknown format {fmt!r}")
    return Volume(
        voxels=data.astype(np.float32),
        spacing=spacing,
        id=id if id is not None else os.path.basename(path),
    )


def load_label_volume(
    path: str, num_classes: int | None = None, format: str | None = None
) -> LabelVolume:
    """Load an integer label map; num_classes defaults to max label + 1."""
    if not os.path.exists(path):
        raise FileMissing(path)
    fmt = format or _detect_format(path)
    data, spacing = _read_nifti(path) if fmt == "nifti" else _read_raw(path)
    if not np.issubdtype(data.dtype, np.integer):
        rounded = np.rint(data)
        if not np.array_equal(rounded, data):
            raise MalformedHeader(f"{path}: non-integer payload for label volume")
        data = rounded.astype(np.int64)
    if num_classes is None:
        num_classes = int(data.max(initial=0)) + 1
    return LabelVolume(
        labels=data.astype(np.int64),
        num_classes=num_classes,
        spacing=spacing,
        id=os.path.basename(path),
    )


def save_volume(v: Volume | LabelVolume, path: str, format: str | None = None) -> None:
    """Save a Volume (f32) or LabelVolume (u8 / i16, lossless) to disk."""
    fmt = format or _detect_format(path)
    if isinstance(v, LabelVolume):
        data = v.labels.astype(np.uint8 if v.num_classes <= 256 else np.int16)
    else:
        data = v.voxels.astype(np.float32)
    if fmt == "nifti":
        _write_nifti(path, data, v.spacing)
    elif fmt == "raw+meta":
        _write_raw(path, data, v.spacing)
    else:
        raise MalformedHeader(f"unknown format {fmt!r}")


def normalize_intensity(v: Volume, window: tuple[float, float] = (-1000.0, 1000.0)) -> Volume:
    """Clip to the window and rescale to [0, 1]; default window is CT Hounsfield."""
    low, high = window
    if low >= high:
        raise DegenerateWindow(f"window low {low} >= high {high}")
    out = np.clip((v.voxels.astype(np.float32) - low) / (high - low), 0.0, 1.0)
    return Volume(voxels=out, spacing=v.spacing, id=v.id)
