"""Scalar volumes with physical metadata, and the file formats that carry them.

A :class:`Volume` stores samples as a flat little-endian-friendly float32
array in x-fastest order (index ``x + nx * (y + ny * z)``) together with
voxel spacing and the world position of voxel (0, 0, 0).  Two formats are
supported on disk:

* ``rawvol`` -- a JSON header (``<name>.json``) holding dims, spacing,
  origin, and a dtype tag, next to a binary payload (``<name>.bin``) with
  raw little-endian samples in x-fastest order.  Round-trips are
  bit-exact, which makes the format suitable for fixtures and for
  comparing pipeline outputs byte for byte.
* ``nifti1`` -- a read-only subset of the single-file NIfTI-1 format,
  optionally gzipped.  Intensity scaling (scl_slope / scl_inter) is
  applied; qform/sform orientation is deliberately ignored, so voxel
  indices together with pixdim define world coordinates and the origin
  is (0, 0, 0).
"""

from __future__ import annotations

import gzip
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError

logger = logging.getLogger(__name__)

# NIfTI-1 datatype codes this reader accepts.
_NIFTI_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    512: np.dtype(np.uint16),
}

_RAWVOL_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


@dataclass(frozen=True)
class Volume:
    """A 3D scalar field sampled on a regular grid.

    Attributes:
        dims: Grid size (nx, ny, nz), each at least 1.
        spacing: Voxel edge lengths in mm, all positive.
        origin: World coordinates of the center of voxel (0, 0, 0), in mm.
        data: Flat float32 samples in x-fastest order, length nx*ny*nz.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims!r}")
        if len(self.spacing) != 3 or any(not (float(s) > 0) for s in self.spacing):
            raise ValueError(f"spacing must be three positive numbers, got {self.spacing!r}")
        if len(self.origin) != 3:
            raise ValueError(f"origin must have three components, got {self.origin!r}")
        if self.data.ndim != 1 or self.data.dtype != np.float32:
            raise ValueError("data must be a flat float32 array")
        expected = self.dims[0] * self.dims[1] * self.dims[2]
        if self.data.size != expected:
            raise ValueError(
                f"data length {self.data.size} does not match dims {self.dims} "
                f"(expected {expected})"
            )

    @classmethod
    def from_grid(cls, grid: np.ndarray, spacing, origin=(0.0, 0.0, 0.0)) -> "Volume":
        """Build a Volume from a 3D array indexed as grid[x, y, z]."""
        if grid.ndim != 3:
            raise ValueError(f"expected a 3D array, got shape {grid.shape}")
        data = np.asarray(grid, dtype=np.float32).ravel(order="F")
        return cls(
            dims=tuple(int(d) for d in grid.shape),
            spacing=tuple(float(s) for s in spacing),
            origin=tuple(float(o) for o in origin),
            data=data,
        )

    @property
    def grid(self) -> np.ndarray:
        """3D view of the samples, indexed as grid[x, y, z]. Shares memory."""
        return self.data.reshape(self.dims, order="F")

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]


@dataclass(frozen=True)
class VoxelCoord:
    """Integer voxel index (x, y, z)."""

    x: int
    y: int
    z: int

    def in_bounds(self, dims: tuple[int, int, int]) -> bool:
        return 0 <= self.x < dims[0] and 0 <= self.y < dims[1] and 0 <= self.z < dims[2]


def slice_at(volume: Volume, z: int) -> np.ndarray:
    """Return the axial slice at index z as a (nx, ny) view into the volume."""
    nz = volume.dims[2]
    if not 0 <= z < nz:
        raise IndexError(f"slice index {z} out of range for {nz} slices")
    return volume.grid[:, :, z]


# ---------------------------------------------------------------------------
# rawvol format
# ---------------------------------------------------------------------------


def _rawvol_paths(path) -> tuple[Path, Path]:
    """Resolve header/payload paths.  Accepts the base path or the header path."""
    p = Path(path)
    header = p if p.suffix == ".json" else p.with_name(p.name + ".json")
    payload = header.with_suffix(".bin")
    return header, payload


def _write_rawvol(path, dims, spacing, origin, array: np.ndarray, dtype_tag: str) -> None:
    header_path, payload_path = _rawvol_paths(path)
    header = {
        "dims": [int(d) for d in dims],
        "spacing": [float(s) for s in spacing],
        "origin": [float(o) for o in origin],
        "dtype": dtype_tag,
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    payload_path.write_bytes(np.ascontiguousarray(array, dtype=_RAWVOL_DTYPES[dtype_tag]).tobytes())


def _read_rawvol(path) -> tuple[dict, np.ndarray]:
    header_path, payload_path = _rawvol_paths(path)
    try:
        header = json.loads(header_path.read_text())
    except OSError as exc:
        raise VolumeFormatError(f"cannot read rawvol header {header_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"malformed rawvol header {header_path}: {exc}") from exc

    for key in ("dims", "spacing", "origin", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"rawvol header {header_path} missing field {key!r}")
    dims = header["dims"]
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise VolumeFormatError(f"rawvol header {header_path} has invalid dims {dims!r}")
    dtype_tag = header["dtype"]
    if dtype_tag not in _RAWVOL_DTYPES:
        raise VolumeFormatError(
            f"rawvol header {header_path} has unsupported dtype {dtype_tag!r} "
            f"(expected one of {sorted(_RAWVOL_DTYPES)})"
        )
    dtype = _RAWVOL_DTYPES[dtype_tag]

    try:
        raw = payload_path.read_bytes()
    except OSError as exc:
        raise VolumeFormatError(f"cannot read rawvol payload {payload_path}: {exc}") from exc
    expected = int(dims[0]) * int(dims[1]) * int(dims[2]) * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"rawvol payload {payload_path} holds {len(raw)} bytes, expected {expected} "
            f"for dims {tuple(dims)}"
        )
    return header, np.frombuffer(raw, dtype=dtype)


# ---------------------------------------------------------------------------
# NIfTI-1 (read-only subset)
# ---------------------------------------------------------------------------


def _read_nifti1(path) -> Volume:
    p = Path(path)
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise VolumeFormatError(f"cannot read {p}: {exc}") from exc
    if blob[:2] == b"\x1f\x8b":
        try:
            blob = gzip.decompress(blob)
        except (OSError, EOFError) as exc:
            raise VolumeFormatError(f"{p}: corrupt gzip stream: {exc}") from exc
    if len(blob) < 352:
        raise VolumeFormatError(f"{p}: file too short for a NIfTI-1 header ({len(blob)} bytes)")

    endian = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != 348:
        endian = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != 348:
            raise VolumeFormatError(f"{p}: not a NIfTI-1 file (sizeof_hdr != 348)")

    magic = blob[344:348]
    if magic[:3] == b"ni1":
        raise VolumeFormatError(f"{p}: detached .hdr/.img pairs are not supported")
    if magic[:3] != b"n+1":
        raise VolumeFormatError(f"{p}: bad NIfTI magic {magic!r}")

    dim = struct.unpack_from(endian + "8h", blob, 40)
    datatype, bitpix = struct.unpack_from(endian + "2h", blob, 70)
    pixdim = struct.unpack_from(endian + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", blob, 112)

    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeFormatError(f"{p}: invalid dim[0] = {ndim}")
    shape = [dim[i] if i <= ndim else 1 for i in range(1, 8)]
    shape = [d if d > 0 else 1 for d in shape]
    if any(d != 1 for d in shape[3:]):
        raise VolumeFormatError(f"{p}: only 3D volumes are supported, got shape {tuple(shape)}")
    nx, ny, nz = shape[:3]

    if datatype not in _NIFTI_DTYPES:
        raise VolumeFormatError(f"{p}: unsupported NIfTI datatype code {datatype}")
    dtype = _NIFTI_DTYPES[datatype].newbyteorder(endian)
    if bitpix != dtype.itemsize * 8:
        raise VolumeFormatError(
            f"{p}: bitpix {bitpix} inconsistent with datatype code {datatype}"
        )

    spacing = pixdim[1:4]
    if any(not (s > 0) for s in spacing):
        raise VolumeFormatError(f"{p}: non-positive pixdim {spacing!r}")

    offset = int(vox_offset) if vox_offset >= 352 else 352
    count = nx * ny * nz
    end = offset + count * dtype.itemsize
    if len(blob) < end:
        raise VolumeFormatError(
            f"{p}: payload truncated, need {end} bytes but file holds {len(blob)}"
        )

    samples = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    data = samples.astype(np.float32)
    if np.isfinite(scl_slope) and scl_slope != 0.0 and np.isfinite(scl_inter):
        data = data * np.float32(scl_slope) + np.float32(scl_inter)

    bad = int(np.count_nonzero(~np.isfinite(data)))
    if bad:
        raise VolumeFormatError(f"{p}: volume contains {bad} non-finite samples")

    return Volume(
        dims=(int(nx), int(ny), int(nz)),
        spacing=tuple(float(s) for s in spacing),
        origin=(0.0, 0.0, 0.0),
        data=data,
    )


# ---------------------------------------------------------------------------
# Public load/save entry points
# ---------------------------------------------------------------------------


def infer_format(path) -> str:
    """Guess a volume format from the file name."""
    name = Path(path).name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return "nifti1"
    return "rawvol"


def load_volume(path, format: str | None = None) -> Volume:
    """Load a volume from disk.

    Args:
        path: File path.  For rawvol, either the base path or the header path.
        format: "nifti1" or "rawvol".  Inferred from the name when omitted.

    Raises:
        VolumeFormatError: missing, truncated, or structurally invalid file.
    """
    fmt = format or infer_format(path)
    if fmt == "nifti1":
        return _read_nifti1(path)
    if fmt == "rawvol":
        header, flat = _read_rawvol(path)
        if header["dtype"] != "f32":
            raise VolumeFormatError(
                f"{path}: rawvol dtype {header['dtype']!r} is not a scalar volume "
                "(expected f32)"
            )
        data = np.asarray(flat, dtype=np.float32)
        bad = int(np.count_nonzero(~np.isfinite(data)))
        if bad:
            raise VolumeFormatError(f"{path}: volume contains {bad} non-finite samples")
        return Volume(
            dims=tuple(int(d) for d in header["dims"]),
            spacing=tuple(float(s) for s in header["spacing"]),
            origin=tuple(float(o) for o in header["origin"]),
            data=data,
        )
    raise VolumeFormatError(f"unknown volume format {fmt!r}")


def save_volume(volume: Volume, path, format: str = "rawvol") -> None:
    """Write a volume to disk.  Only the rawvol format is writable."""
    if format != "rawvol":
        raise VolumeFormatError(f"cannot write volumes in format {format!r}")
    _write_rawvol(path, volume.dims, volume.spacing, volume.origin, volume.data, "f32")
    logger.debug("wrote rawvol %s (%d voxels)", path, volume.voxel_count)
