"""Labeled voxel volumes ("grain scans") and their on-disk formats.

A scan is stored as two files: a JSON header and a raw little-endian label
array in x-fastest order, i.e. voxel ``(i, j, l)`` lives at flat index
``i + nx * (j + ny * l)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

PathLike = Union[str, Path]

BYTE_ORDER = "little-endian"
_DTYPES = {"uint16": np.dtype("<u2"), "uint32": np.dtype("<u4")}


class VolumeFormatError(ValueError):
    """Raised when a header or data file does not match the volume format."""


@dataclass(frozen=True, eq=False)
class GrainScan:
    """Dense labeled voxel volume with physical voxel spacing.

    Parameters
    ----------
    dims : sequence of int, len 3
        Number of voxels along x, y, z.
    spacing : sequence of float, len 3
        Physical edge length of a voxel along each axis (µm).
    labels : numpy.ndarray
        Flat label array of length ``nx*ny*nz`` in x-fastest order.
    k : int, optional
        Number of grains. Inferred as the maximum label if omitted.
    allow_unassigned : bool
        Permit label 0 ("unassigned/boundary"), as produced by rasterized
        diagrams. Input scans use labels ``1..k`` only and every label must
        occur at least once.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    labels: np.ndarray = field(repr=False)
    k: int = 0
    allow_unassigned: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(spacing)) or min(spacing) <= 0:
            raise ValueError(f"spacing components must be positive, got {self.spacing}")
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            labels = np.ravel(labels, order="F") if labels.shape == dims else labels.ravel()
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        n = dims[0] * dims[1] * dims[2]
        if labels.size != n:
            raise VolumeFormatError(f"size mismatch: {labels.size} labels for dims {dims}")
        labels = labels.astype(np.int64 if labels.dtype.itemsize > 4 else np.int32, copy=True)
        labels.setflags(write=False)
        lo, hi = int(labels.min()), int(labels.max())
        k = int(self.k) if self.k else hi
        floor = 0 if self.allow_unassigned else 1
        if lo < floor:
            raise VolumeFormatError(f"label {lo} encountered; labels must be in [{floor}, {k}]")
        if hi > k:
            raise VolumeFormatError(f"label {hi} encountered; labels must be in [{floor}, {k}]")
        if k < 1:
            raise VolumeFormatError("volume contains no grains")
        if not self.allow_unassigned:
            present = np.bincount(labels, minlength=k + 1)[1:]
            missing = np.flatnonzero(present == 0)
            if missing.size:
                raise VolumeFormatError(f"labels {list(missing[:5] + 1)} do not occur in the volume")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def volume(self) -> np.ndarray:
        """Read-only ``(nx, ny, nz)`` view of the labels."""
        return self.labels.reshape(self.dims, order="F")

    def coordinates(self, index=None) -> np.ndarray:
        """Physical voxel centers ``((i+½)sx, (j+½)sy, (l+½)sz)``.

        Parameters
        ----------
        index : array_like of int, optional
            Flat voxel indices. All voxels if omitted.
        """
        return voxel_centers(self.dims, self.spacing, index)

    def kappa(self) -> np.ndarray:
        """Voxel count per grain, index 0 holding grain 1."""
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    def __eq__(self, other):
        if not isinstance(other, GrainScan):
            return NotImplemented
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.k == other.k and np.array_equal(self.labels, other.labels))

    __hash__ = None


def voxel_centers(dims: Sequence[int], spacing: Sequence[float], index=None) -> np.ndarray:
    nx, ny, _ = dims
    if index is None:
        index = np.arange(int(np.prod(dims)))
    index = np.asarray(index, dtype=np.int64)
    i = index % nx
    j = (index // nx) % ny
    l = index // (nx * ny)
    out = np.empty((index.size, 3))
    out[:, 0] = (i + 0.5) * spacing[0]
    out[:, 1] = (j + 0.5) * spacing[1]
    out[:, 2] = (l + 0.5) * spacing[2]
    return out


def _dtype_for(k: int) -> str:
    return "uint16" if k <= np.iinfo(np.uint16).max else "uint32"


def save_scan(scan: GrainScan, header_path: PathLike, data_path: PathLike) -> None:
    """Write ``scan`` as a JSON header plus raw little-endian label data."""
    dtype = _dtype_for(scan.k)
    header = {
        "dims": list(scan.dims),
        "spacing_um": list(scan.spacing),
        "k": scan.k,
        "dtype": dtype,
        "byte_order": BYTE_ORDER,
        "unassigned_allowed": scan.allow_unassigned,
    }
    Path(header_path).write_text(json.dumps(header, indent=2) + "\n")
    scan.labels.astype(_DTYPES[dtype]).tofile(Path(data_path))


def read_header(header_path: PathLike) -> dict:
    try:
        header = json.loads(Path(header_path).read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"header is not valid JSON: {exc}") from exc
    for key in ("dims", "spacing_um", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"header lacks key {key!r}")
    if header.get("byte_order", BYTE_ORDER) != BYTE_ORDER:
        raise VolumeFormatError(f"unsupported byte order {header['byte_order']!r}")
    if header["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {header['dtype']!r}")
    k = header.get("k")
    if k is not None and int(k) > np.iinfo(_DTYPES[header["dtype"]]).max:
        raise VolumeFormatError(f"dtype {header['dtype']} too narrow for k={k}")
    return header


def load_scan(header_path: PathLike, data_path: PathLike) -> GrainScan:
    """Read a scan written by :func:`save_scan` and validate it."""
    header = read_header(header_path)
    dtype = _DTYPES[header["dtype"]]
    dims = tuple(int(d) for d in header["dims"])
    raw = Path(data_path).read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(f"size mismatch: expected {expected} bytes, found {len(raw)}")
    labels = np.frombuffer(raw, dtype=dtype)
    return GrainScan(dims, header["spacing_um"], labels, k=int(header.get("k") or 0),
                     allow_unassigned=bool(header.get("unassigned_allowed", False)))


def label_colors(labels) -> np.ndarray:
    """Map labels to RGB bytes by a bijective 24-bit mix; label 0 is black.

    The mix is invertible on ``[0, 2**24)`` and fixes 0, so distinct labels
    below ``2**24`` always receive distinct, non-black colors.
    """
    v = np.asarray(labels, dtype=np.uint64) & np.uint64(0xFFFFFF)
    mask = np.uint64(0xFFFFFF)
    v = (v * np.uint64(0x9E3779)) & mask          # odd multiplier: bijective mod 2**24
    v ^= v >> np.uint64(12)
    v = (v * np.uint64(0x85EBCB)) & mask
    v ^= v >> np.uint64(11)
    rgb = np.stack([(v >> np.uint64(16)) & np.uint64(0xFF),
                    (v >> np.uint64(8)) & np.uint64(0xFF),
                    v & np.uint64(0xFF)], axis=-1)
    return rgb.astype(np.uint8)


_AXES = {"x": 0, "y": 1, "z": 2}


def slice_labels(scan: GrainScan, axis: str, index: int) -> np.ndarray:
    """2D label array of one slice, rows along the slower in-plane axis."""
    ax = _AXES[axis]
    if not 0 <= index < scan.dims[ax]:
        raise IndexError(f"slice index {index} out of range for axis {axis} "
                         f"with {scan.dims[ax]} voxels")
    plane = np.take(scan.volume, index, axis=ax)
    return plane.T  # (height, width) with width along the faster axis


def export_slice(scan: GrainScan, axis: str, index: int, out_path: PathLike) -> None:
    """Write one slice as a binary PPM (P6) image."""
    plane = slice_labels(scan, axis, index)
    height, width = plane.shape
    rgb = label_colors(plane)
    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a binary PPM written by :func:`export_slice` into ``(h, w, 3)``."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise VolumeFormatError("not a binary PPM")
    width, height, _ = (int(t) for t in tokens[1:])
    pixels = np.frombuffer(data[pos + 1:], dtype=np.uint8)
    return pixels.reshape(height, width, 3)
