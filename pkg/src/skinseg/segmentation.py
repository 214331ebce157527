"""Seeded background flood fill for skin segmentation.

Each axial slice is labeled independently: a frontier grows outward from a
known background pixel, marking every reachable pixel below the isovalue
as background (0).  A pixel at or above the isovalue is marked boundary
(1) and the frontier does not cross it, so everything the fill never
reaches keeps the interior label (2).  The non-background region is the
body: boundary shell plus enclosed interior, including internal cavities,
which is exactly what a skin surface extraction wants.

The fill visits each pixel at most once and evaluates its intensity
exactly once, so a slice costs O(nx * ny) regardless of content.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoBackgroundSeedError
from .preprocess import gradient_magnitude, normalize_intensities, pad_volume, subsample
from .volume_io import Volume, VoxelCoord, slice_at

logger = logging.getLogger(__name__)

BACKGROUND = 0
BOUNDARY = 1
INTERIOR = 2

DEFAULT_FIXED_ISOVALUE = 0.1
DEFAULT_GRADIENT_ISOVALUE = 0.01


@dataclass(frozen=True)
class LabelGrid:
    """Per-voxel segmentation labels on the same grid layout as Volume.

    Attributes:
        dims: Grid size (nx, ny, nz).
        spacing: Voxel edge lengths in mm.
        origin: World coordinates of voxel (0, 0, 0), in mm.
        labels: Flat uint8 labels in x-fastest order; values 0, 1, or 2.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    labels: np.ndarray

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims!r}")
        if self.labels.ndim != 1 or self.labels.dtype != np.uint8:
            raise ValueError("labels must be a flat uint8 array")
        expected = self.dims[0] * self.dims[1] * self.dims[2]
        if self.labels.size != expected:
            raise ValueError(
                f"labels length {self.labels.size} does not match dims {self.dims}"
            )

    @property
    def grid(self) -> np.ndarray:
        """3D view of the labels, indexed as grid[x, y, z]. Shares memory."""
        return self.labels.reshape(self.dims, order="F")


@dataclass(frozen=True)
class IsovalueReport:
    """Which threshold a segmentation actually used, and where it came from."""

    strategy: str
    isovalue: float
    gradient_based: bool

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "isovalue": self.isovalue,
            "gradient_based": self.gradient_based,
        }


@dataclass
class FillStats:
    """Instrumentation for one flood fill: every count is per-slice."""

    evaluated: int = 0
    background: int = 0
    boundary: int = 0


@dataclass
class SegmentationConfig:
    """Parameters for segment_volume.

    Attributes:
        isovalue_strategy: "fixed" thresholds normalized intensities;
            "gradient" thresholds the normalized gradient magnitude.
        isovalue: Threshold in (0, 1); None picks the strategy default
            (0.1 fixed, 0.01 gradient).
        connectivity: Frontier neighborhood, 4 or 8.
        pad_width: Background padding added around the volume before the
            fill, in voxels.  Guarantees corner seeds and closes surfaces
            that would otherwise exit through the volume faces.
        seed_policy: "corner_scan" tries the four slice corners in order
            (0,0), (nx-1,0), (0,ny-1), (nx-1,ny-1); "explicit" uses
            explicit_seed's (x, y) on every slice.
        explicit_seed: In-plane seed for the "explicit" policy, given in
            the coordinates of the processed (subsampled, padded) grid.
        subsample_factor: Decimation applied before everything else.
    """

    isovalue_strategy: str = "fixed"
    isovalue: float | None = None
    connectivity: int = 4
    pad_width: int = 1
    seed_policy: str = "corner_scan"
    explicit_seed: VoxelCoord | None = None
    subsample_factor: tuple[int, int, int] = (1, 1, 1)

    def validate(self) -> None:
        if self.isovalue_strategy not in ("fixed", "gradient"):
            raise ConfigError(
                f"isovalue_strategy must be 'fixed' or 'gradient', got {self.isovalue_strategy!r}"
            )
        if self.isovalue is not None and not 0.0 < float(self.isovalue) < 1.0:
            raise ConfigError(f"isovalue must lie in (0, 1), got {self.isovalue}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if int(self.pad_width) < 0:
            raise ConfigError(f"pad_width must be >= 0, got {self.pad_width}")
        if self.seed_policy not in ("corner_scan", "explicit"):
            raise ConfigError(
                f"seed_policy must be 'corner_scan' or 'explicit', got {self.seed_policy!r}"
            )
        if self.seed_policy == "explicit" and self.explicit_seed is None:
            raise ConfigError("seed_policy 'explicit' requires explicit_seed")
        factor = self.subsample_factor
        if np.isscalar(factor):
            factor = (factor, factor, factor)
        if len(tuple(factor)) != 3 or any(int(f) < 1 for f in factor):
            raise ConfigError(f"subsample factors must be integers >= 1, got {factor!r}")


def resolve_isovalue(
    volume: Volume, strategy: str = "fixed", value: float | None = None
) -> tuple[Volume, IsovalueReport]:
    """Prepare the field the fill thresholds, and the threshold itself.

    Returns the volume the isovalue applies to (normalized intensities for
    "fixed", normalized gradient magnitude for "gradient") together with a
    report of the resolved threshold.
    """
    if strategy == "fixed":
        out = normalize_intensities(volume)
        iso = DEFAULT_FIXED_ISOVALUE if value is None else float(value)
        gradient_based = False
    elif strategy == "gradient":
        out = gradient_magnitude(volume)
        iso = DEFAULT_GRADIENT_ISOVALUE if value is None else float(value)
        gradient_based = True
    else:
        raise ConfigError(f"unknown isovalue strategy {strategy!r}")
    if not 0.0 < iso < 1.0:
        raise ConfigError(f"isovalue must lie in (0, 1), got {iso}")
    return out, IsovalueReport(strategy=strategy, isovalue=iso, gradient_based=gradient_based)


def select_seed(slice2d: np.ndarray, isovalue: float) -> tuple[int, int]:
    """Pick the first slice corner whose intensity is below the isovalue.

    Corners are tried in the fixed order (0,0), (nx-1,0), (0,ny-1),
    (nx-1,ny-1) so seeding is deterministic.

    Raises:
        NoBackgroundSeedError: all four corners are at or above the isovalue.
    """
    nx, ny = slice2d.shape
    for x, y in ((0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)):
        if slice2d[x, y] < isovalue:
            return (x, y)
    raise NoBackgroundSeedError(
        f"no slice corner lies below isovalue {isovalue}"
    )


def segment_slice(
    slice2d: np.ndarray,
    isovalue: float,
    seed: tuple[int, int],
    connectivity: int = 4,
    stats: FillStats | None = None,
) -> np.ndarray:
    """Flood-fill one slice from a background seed.

    Every pixel starts as interior (2).  The frontier is a FIFO queue
    seeded with the neighbors of the seed pixel; popping a pixel evaluates
    its intensity once.  Below the isovalue it becomes background (0) and
    its unvisited neighbors join the frontier; at or above it becomes
    boundary (1) and the frontier stops there.  Pixels are marked visited
    when enqueued, never re-enqueued.

    Args:
        slice2d: (nx, ny) intensity slice.
        isovalue: Threshold separating background from tissue.
        seed: (x, y) of a pixel known to be background.
        connectivity: 4 for edge neighbors, 8 to add diagonals.
        stats: Optional FillStats to fill with evaluation counts.

    Returns:
        (nx, ny) uint8 label array.

    Raises:
        NoBackgroundSeedError: the seed pixel is not below the isovalue.
        ConfigError: connectivity is not 4 or 8.
        IndexError: the seed lies outside the slice.
    """
    if connectivity not in (4, 8):
        raise ConfigError(f"connectivity must be 4 or 8, got {connectivity}")
    nx, ny = slice2d.shape
    sx, sy = int(seed[0]), int(seed[1])
    if not (0 <= sx < nx and 0 <= sy < ny):
        raise IndexError(f"seed {seed} outside slice of shape {slice2d.shape}")
    if not slice2d[sx, sy] < isovalue:
        raise NoBackgroundSeedError(
            f"seed {seed} has intensity {float(slice2d[sx, sy])}, not below isovalue {isovalue}"
        )

    n = nx * ny
    vals = slice2d.ravel(order="F").tolist()
    labels = bytearray([INTERIOR]) * n
    visited = bytearray(n)
    diagonal = connectivity == 8
    iso = float(isovalue)
    last_row = n - nx

    # The seed starts in the frontier and is handled by the uniform loop;
    # the precondition above guarantees its first pop lands in the
    # background branch.  Pixels are marked visited when enqueued, so each
    # is popped (and its intensity evaluated) at most once.
    p0 = sx + nx * sy
    visited[p0] = 1
    frontier = deque((p0,))
    push = frontier.append
    pop = frontier.popleft

    evaluated = 0
    n_background = 0
    n_boundary = 0
    while frontier:
        p = pop()
        evaluated += 1
        if vals[p] < iso:
            labels[p] = BACKGROUND
            n_background += 1
            x = p % nx
            if x > 0 and not visited[p - 1]:
                visited[p - 1] = 1
                push(p - 1)
            if x < nx - 1 and not visited[p + 1]:
                visited[p + 1] = 1
                push(p + 1)
            if p >= nx and not visited[p - nx]:
                visited[p - nx] = 1
                push(p - nx)
            if p < last_row and not visited[p + nx]:
                visited[p + nx] = 1
                push(p + nx)
            if diagonal:
                if x > 0 and p >= nx and not visited[p - nx - 1]:
                    visited[p - nx - 1] = 1
                    push(p - nx - 1)
                if x < nx - 1 and p >= nx and not visited[p - nx + 1]:
                    visited[p - nx + 1] = 1
                    push(p - nx + 1)
                if x > 0 and p < last_row and not visited[p + nx - 1]:
                    visited[p + nx - 1] = 1
                    push(p + nx - 1)
                if x < nx - 1 and p < last_row and not visited[p + nx + 1]:
                    visited[p + nx + 1] = 1
                    push(p + nx + 1)
        else:
            labels[p] = BOUNDARY
            n_boundary += 1

    if stats is not None:
        stats.evaluated = evaluated
        stats.background = n_background
        stats.boundary = n_boundary

    return np.frombuffer(labels, dtype=np.uint8).reshape((nx, ny), order="F")


def segment_volume(
    volume: Volume, config: SegmentationConfig | None = None
) -> tuple[LabelGrid, IsovalueReport]:
    """Segment a volume slice by slice.

    Pipeline order: subsample, resolve the isovalue field, pad with
    background, then flood-fill each axial slice independently.  A slice
    with no usable seed (every corner at or above the isovalue, or an
    explicit seed that is not background there) is labeled entirely
    interior and a warning is logged; padding with the volume minimum
    makes this impossible in practice.

    Returns:
        The label grid on the processed (subsampled, padded) geometry and
        the isovalue report.

    Raises:
        ConfigError: invalid configuration, or explicit seed out of range.
        DegenerateVolumeError: constant volume.
    """
    config = config or SegmentationConfig()
    config.validate()

    vol = volume
    factor = config.subsample_factor
    if np.isscalar(factor):
        factor = (factor, factor, factor)
    if tuple(int(f) for f in factor) != (1, 1, 1):
        vol = subsample(vol, factor)

    vol, report = resolve_isovalue(vol, config.isovalue_strategy, config.isovalue)
    if int(config.pad_width) > 0:
        vol = pad_volume(vol, int(config.pad_width))

    nx, ny, nz = vol.dims
    if config.seed_policy == "explicit":
        seed_xy = (int(config.explicit_seed.x), int(config.explicit_seed.y))
        if not (0 <= seed_xy[0] < nx and 0 <= seed_xy[1] < ny):
            raise ConfigError(
                f"explicit seed {seed_xy} outside processed grid of dims {vol.dims}"
            )
    else:
        seed_xy = None

    labels = np.empty(nx * ny * nz, dtype=np.uint8)
    label_grid = labels.reshape((nx, ny, nz), order="F")
    seedless = 0
    for z in range(nz):
        sl = slice_at(vol, z)
        try:
            seed = seed_xy if seed_xy is not None else select_seed(sl, report.isovalue)
            label_grid[:, :, z] = segment_slice(
                sl, report.isovalue, seed, connectivity=config.connectivity
            )
        except NoBackgroundSeedError:
            label_grid[:, :, z] = INTERIOR
            seedless += 1
            logger.warning("slice %d has no background seed; labeled all interior", z)
    if seedless:
        logger.warning("%d of %d slices had no background seed", seedless, nz)

    return (
        LabelGrid(dims=vol.dims, spacing=vol.spacing, origin=vol.origin, labels=labels),
        report,
    )


# ---------------------------------------------------------------------------
# Label grid serialization (rawvol with dtype u8)
# ---------------------------------------------------------------------------


def save_label_grid(grid: LabelGrid, path) -> None:
    """Write a label grid as a rawvol header/payload pair with dtype u8."""
    from .volume_io import _write_rawvol

    _write_rawvol(path, grid.dims, grid.spacing, grid.origin, grid.labels, "u8")


def load_label_grid(path) -> LabelGrid:
    """Read a label grid written by save_label_grid."""
    from .errors import VolumeFormatError
    from .volume_io import _read_rawvol

    header, flat = _read_rawvol(path)
    if header["dtype"] != "u8":
        raise VolumeFormatError(
            f"{path}: rawvol dtype {header['dtype']!r} is not a label grid (expected u8)"
        )
    labels = np.asarray(flat, dtype=np.uint8)
    if labels.size and int(labels.max()) > INTERIOR:
        raise VolumeFormatError(f"{path}: label values must be 0, 1, or 2")
    return LabelGrid(
        dims=tuple(int(d) for d in header["dims"]),
        spacing=tuple(float(s) for s in header["spacing"]),
        origin=tuple(float(o) for o in header["origin"]),
        labels=labels,
    )
