"""Intensity and grid transforms applied before segmentation.

All functions take and return :class:`~skinseg.volume_io.Volume` values and
never mutate their input.  Normalization is float32 throughout so that
normalizing an already-normalized volume is a bit-exact no-op.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ConfigError, DegenerateVolumeError
from .volume_io import Volume

logger = logging.getLogger(__name__)


def normalize_intensities(volume: Volume) -> Volume:
    """Rescale intensities linearly onto [0, 1].

    Raises:
        DegenerateVolumeError: constant volume (max == min), for which no
            rescaling exists.
    """
    lo = float(volume.data.min())
    hi = float(volume.data.max())
    if not hi > lo:
        raise DegenerateVolumeError(
            f"degenerate intensity range: min == max == {lo}"
        )
    data = (volume.data - np.float32(lo)) / np.float32(hi - lo)
    return Volume(dims=volume.dims, spacing=volume.spacing, origin=volume.origin, data=data)


def gradient_magnitude(volume: Volume, normalize: bool = True) -> Volume:
    """Per-voxel magnitude of the spatial intensity gradient.

    Central differences in the interior, one-sided differences on the
    faces, each axis scaled by its voxel spacing.  By default the result
    is renormalized onto [0, 1] so gradient-based isovalues share the
    domain of fixed ones.

    Raises:
        ValueError: any grid dimension is below 2 (no difference exists).
        DegenerateVolumeError: the magnitude is constant (via normalization).
    """
    if any(d < 2 for d in volume.dims):
        raise ValueError(
            f"gradient needs at least 2 samples per axis, got dims {volume.dims}"
        )
    gx, gy, gz = np.gradient(
        volume.grid, volume.spacing[0], volume.spacing[1], volume.spacing[2]
    )
    mag = np.sqrt(gx * gx + gy * gy + gz * gz)
    out = Volume.from_grid(mag, spacing=volume.spacing, origin=volume.origin)
    return normalize_intensities(out) if normalize else out


def pad_volume(volume: Volume, width: int, fill: float | None = None) -> Volume:
    """Surround the volume with `width` voxels of `fill` on every face.

    The fill defaults to the volume minimum, which after normalization is
    guaranteed background.  The origin shifts by -width * spacing so the
    original samples keep their world coordinates.
    """
    width = int(width)
    if width < 0:
        raise ConfigError(f"pad width must be >= 0, got {width}")
    if width == 0:
        return Volume(
            dims=volume.dims, spacing=volume.spacing, origin=volume.origin,
            data=volume.data.copy(),
        )
    if fill is None:
        fill = float(volume.data.min())
    padded = np.pad(volume.grid, width, mode="constant", constant_values=np.float32(fill))
    origin = tuple(
        float(o) - width * float(s) for o, s in zip(volume.origin, volume.spacing)
    )
    return Volume.from_grid(padded, spacing=volume.spacing, origin=origin)


def subsample(volume: Volume, factor) -> Volume:
    """Decimate the grid, keeping every factor-th sample per axis.

    `factor` is an integer or an (fx, fy, fz) triple.  Sample (0, 0, 0) is
    always kept, so the origin is unchanged and spacing scales by the
    factor.  No smoothing is applied before decimation.
    """
    if np.isscalar(factor):
        factor = (factor, factor, factor)
    factor = tuple(int(f) for f in factor)
    if len(factor) != 3 or any(f < 1 for f in factor):
        raise ConfigError(f"subsample factors must be integers >= 1, got {factor}")
    if factor == (1, 1, 1):
        return Volume(
            dims=volume.dims, spacing=volume.spacing, origin=volume.origin,
            data=volume.data.copy(),
        )
    fx, fy, fz = factor
    grid = volume.grid[::fx, ::fy, ::fz]
    spacing = tuple(float(s) * f for s, f in zip(volume.spacing, factor))
    logger.debug("subsampled %s -> %s", volume.dims, grid.shape)
    return Volume.from_grid(grid, spacing=spacing, origin=volume.origin)
