"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .volume_io import Volume


def check_volume(volume, require_finite: bool = True) -> None:
    """Validate a Volume beyond its constructor invariants.

    The constructor already checks shapes and dtypes; this adds the
    optional full scan for non-finite samples, which is O(N) and
    therefore not run on every internal construction.
    """
    if not isinstance(volume, Volume):
        raise TypeError(f"expected a Volume, got {type(volume).__name__}")
    if require_finite:
        bad = int(np.count_nonzero(~np.isfinite(volume.data)))
        if bad:
            raise ValueError(f"volume contains {bad} non-finite samples")


def check_label_grid(grid) -> None:
    """Validate that a label grid holds only the three segmentation labels."""
    from .segmentation import LabelGrid

    if not isinstance(grid, LabelGrid):
        raise TypeError(f"expected a LabelGrid, got {type(grid).__name__}")
    if grid.labels.dtype != np.uint8:
        raise ValueError(f"labels must be uint8, got {grid.labels.dtype}")
    if grid.labels.size and int(grid.labels.max()) > 2:
        raise ValueError("labels must be 0 (background), 1 (boundary), or 2 (interior)")


def check_mesh(mesh) -> None:
    """Validate triangle mesh structure: finite vertices, in-range indices."""
    from .surface import TriangleMesh

    if not isinstance(mesh, TriangleMesh):
        raise TypeError(f"expected a TriangleMesh, got {type(mesh).__name__}")
    v, t = mesh.vertices, mesh.triangles
    if v.ndim != 2 or v.shape[1] != 3:
        raise ValueError(f"vertices must have shape (n, 3), got {v.shape}")
    if t.ndim != 2 or t.shape[1] != 3:
        raise ValueError(f"triangles must have shape (m, 3), got {t.shape}")
    if v.size and not np.isfinite(v).all():
        raise ValueError("mesh vertices contain non-finite coordinates")
    if t.size:
        if int(t.min()) < 0 or int(t.max()) >= len(v):
            raise ValueError("triangle indices out of range")
        degenerate = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if bool(degenerate.any()):
            raise ValueError("triangles must reference three distinct vertices")
