"""Shared test helpers.

Two independent oracles live here.  The NIfTI builder constructs files
byte by byte with struct, so the reader under test is exercised against
an independent encoding of the format rather than against its own
writer.  The flood-fill oracle recomputes slice labels from first
principles with scipy.ndimage connected components, sharing no code with
the implementation under test.
"""

from __future__ import annotations

import gzip
import struct

import numpy as np
from scipy import ndimage

_DATATYPE_TO_NUMPY = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    512: np.uint16,
}


def make_nifti1(
    grid,
    pixdim=(1.0, 1.0, 1.0),
    datatype=16,
    slope=0.0,
    inter=0.0,
    gz=False,
    magic=b"n+1\x00",
    vox_offset=352.0,
    endian="<",
    ndim=3,
    bitpix=None,
    truncate_payload=0,
):
    """Serialize grid[x, y, z] as a single-file NIfTI-1 byte string."""
    arr = np.asarray(grid)
    nx, ny, nz = arr.shape

    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, 348)
    dim = [ndim, nx, ny, nz, 1, 1, 1, 1]
    if ndim > 3:
        dim[4] = 2
    struct.pack_into(endian + "8h", hdr, 40, *dim)
    np_dtype = np.dtype(_DATATYPE_TO_NUMPY[datatype])
    if bitpix is None:
        bitpix = np_dtype.itemsize * 8
    struct.pack_into(endian + "2h", hdr, 70, datatype, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, *pixdim, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into(endian + "f", hdr, 108, vox_offset)
    struct.pack_into(endian + "2f", hdr, 112, slope, inter)
    hdr[344:348] = magic

    payload = arr.astype(np_dtype.newbyteorder(endian)).ravel(order="F").tobytes()
    if truncate_payload:
        payload = payload[:-truncate_payload]
    pad = max(int(vox_offset), 352) - 348
    blob = bytes(hdr) + b"\x00" * pad + payload
    return gzip.compress(blob) if gz else blob


def oracle_fill(slice2d, isovalue, seed, connectivity=4):
    """Reference slice labeling via connected components.

    Background is the connected component of below-isovalue pixels that
    contains the seed; boundary is every at-or-above-isovalue pixel
    adjacent (under the same connectivity) to that component; everything
    else keeps the interior label.
    """
    below = np.asarray(slice2d) < isovalue
    if connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        structure = ndimage.generate_binary_structure(2, 2)
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    components, _ = ndimage.label(below, structure=structure)
    seed_component = components[seed[0], seed[1]]
    assert seed_component != 0, "oracle seed must be below the isovalue"
    background = components == seed_component
    touched = ndimage.binary_dilation(background, structure=structure)
    boundary = touched & ~below
    labels = np.full(below.shape, 2, dtype=np.uint8)
    labels[background] = 0
    labels[boundary] = 1
    return labels


def random_slice(rng, max_side=32):
    """Random test slice with a guaranteed background pixel at (0, 0).

    Draws from three content families: uniform speckle, smoothed blobs,
    and near-binary masks, so both sprawling and compact background
    regions are exercised.
    """
    nx = int(rng.integers(1, max_side + 1))
    ny = int(rng.integers(1, max_side + 1))
    family = rng.integers(0, 3)
    if family == 0:
        grid = rng.random((nx, ny))
    elif family == 1:
        grid = ndimage.gaussian_filter(rng.random((nx, ny)), sigma=2.0)
        span = grid.max() - grid.min()
        if span > 0:
            grid = (grid - grid.min()) / span
    else:
        grid = (rng.random((nx, ny)) < rng.uniform(0.2, 0.8)).astype(np.float64)
    isovalue = float(rng.uniform(0.05, 0.95))
    grid[0, 0] = 0.0
    return grid.astype(np.float32), isovalue
