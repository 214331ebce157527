"""Analytic phantoms with exact ground-truth geometry.

Each phantom rasterizes a closed shape onto a voxel grid (a voxel is body
when its center lies inside the shape) and returns, next to the volume, a
truth object that answers exact distance-to-surface queries for the
analytic shape.  Optional uniform noise keeps the two intensity classes
separable: its amplitude is capped at a quarter of the class gap.

Kinds:
    sphere: ball centered in the volume by default.
    box: axis-aligned box.
    body_with_bed: ellipsoid body plus a thin slab under it in y,
        mimicking a patient table that background flood fill cannot
        remove (the slab is tissue-bright and rests inside the field of
        view).
    border_touching_sphere: sphere whose default center sits on the x
        face of the grid, so the rasterized body is cut off by the volume
        border; no containment check is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .volume_io import Volume

logger = logging.getLogger(__name__)

KINDS = ("sphere", "box", "body_with_bed", "border_touching_sphere")


@dataclass(frozen=True)
class SphereTruth:
    """Exact surface-distance queries for a sphere."""

    center: tuple[float, float, float]
    radius: float

    def distance_to_surface(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        radial = np.linalg.norm(points - np.asarray(self.center), axis=1)
        return np.abs(radial - self.radius)

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        radial = np.linalg.norm(points - np.asarray(self.center), axis=1)
        return radial <= self.radius

    def to_dict(self) -> dict:
        return {"shape": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BoxTruth:
    """Exact surface-distance queries for an axis-aligned box."""

    box_min: tuple[float, float, float]
    box_max: tuple[float, float, float]

    def distance_to_surface(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = np.asarray(self.box_min)
        hi = np.asarray(self.box_max)
        center = (lo + hi) / 2.0
        half = (hi - lo) / 2.0
        q = np.abs(points - center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return np.abs(outside + inside)

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all(
            (points >= np.asarray(self.box_min)) & (points <= np.asarray(self.box_max)),
            axis=1,
        )

    def to_dict(self) -> dict:
        return {"shape": "box", "box_min": list(self.box_min), "box_max": list(self.box_max)}


@dataclass(frozen=True)
class BodyWithBedTruth:
    """Component geometry of the ellipsoid body and the bed slab.

    The ellipsoid has no closed-form surface distance, so this truth
    exposes the exact component shapes instead of a combined query.
    """

    body_center: tuple[float, float, float]
    body_semiaxes: tuple[float, float, float]
    slab: BoxTruth

    def body_contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        scaled = (points - np.asarray(self.body_center)) / np.asarray(self.body_semiaxes)
        return (scaled**2).sum(axis=1) <= 1.0

    def to_dict(self) -> dict:
        return {
            "shape": "body_with_bed",
            "body_center": list(self.body_center),
            "body_semiaxes": list(self.body_semiaxes),
            "slab": self.slab.to_dict(),
        }


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one phantom volume.

    Geometry fields left as None are resolved to kind-specific defaults
    derived from the grid extent; call resolved() to see them.
    """

    kind: str
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    body_intensity: float = 1.0
    background_intensity: float = 0.0
    noise_amplitude: float = 0.0
    center: tuple[float, float, float] | None = None
    radius: float | None = None
    box_min: tuple[float, float, float] | None = None
    box_max: tuple[float, float, float] | None = None
    semiaxes: tuple[float, float, float] | None = None
    slab_min: tuple[float, float, float] | None = None
    slab_max: tuple[float, float, float] | None = None

    def _extent(self) -> np.ndarray:
        return (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    def resolved(self) -> "PhantomSpec":
        """Fill geometry defaults from the grid extent."""
        lo = np.asarray(self.origin, dtype=np.float64)
        ext = self._extent()
        mid = lo + ext / 2.0
        updates = {}
        if self.kind in ("sphere", "border_touching_sphere"):
            if self.radius is None:
                updates["radius"] = float(0.25 * ext.min())
            if self.center is None:
                if self.kind == "sphere":
                    updates["center"] = tuple(mid)
                else:
                    updates["center"] = (float(lo[0]), float(mid[1]), float(mid[2]))
        elif self.kind == "box":
            if self.box_min is None:
                updates["box_min"] = tuple(lo + 0.25 * ext)
            if self.box_max is None:
                updates["box_max"] = tuple(lo + 0.75 * ext)
        elif self.kind == "body_with_bed":
            if self.center is None:
                updates["center"] = tuple(mid)
            if self.semiaxes is None:
                updates["semiaxes"] = tuple(np.array([0.3, 0.3, 0.4]) * ext)
            if self.slab_min is None:
                updates["slab_min"] = tuple(lo + np.array([0.1, 0.02, 0.1]) * ext)
            if self.slab_max is None:
                updates["slab_max"] = tuple(lo + np.array([0.9, 0.08, 0.9]) * ext)
        return replace(self, **updates) if updates else self

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown phantom kind {self.kind!r} (expected one of {KINDS})")
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ConfigError(f"dims must be three positive integers, got {self.dims!r}")
        if len(self.spacing) != 3 or any(not float(s) > 0 for s in self.spacing):
            raise ConfigError(f"spacing must be positive, got {self.spacing!r}")
        span = float(self.body_intensity) - float(self.background_intensity)
        if not span > 0:
            raise ConfigError(
                f"body intensity {self.body_intensity} must exceed background "
                f"{self.background_intensity}"
            )
        if self.noise_amplitude < 0:
            raise ConfigError(f"noise amplitude must be >= 0, got {self.noise_amplitude}")
        if self.noise_amplitude >= span / 4.0:
            raise ConfigError(
                f"noise amplitude {self.noise_amplitude} must stay below a quarter "
                f"of the intensity gap {span} to keep the classes separable"
            )

        spec = self.resolved()
        lo = np.asarray(spec.origin, dtype=np.float64)
        hi = lo + spec._extent()
        if spec.kind in ("sphere", "border_touching_sphere"):
            if spec.radius <= 0:
                raise ConfigError(f"radius must be positive, got {spec.radius}")
            if spec.kind == "sphere":
                c = np.asarray(spec.center)
                if np.any(c - spec.radius < lo) or np.any(c + spec.radius > hi):
                    raise ConfigError(
                        f"sphere of radius {spec.radius} at {tuple(c)} does not fit "
                        f"inside sample extent {tuple(lo)}..{tuple(hi)}"
                    )
        elif spec.kind == "box":
            bmin = np.asarray(spec.box_min)
            bmax = np.asarray(spec.box_max)
            if np.any(bmin >= bmax):
                raise ConfigError(f"box min {spec.box_min} must be below max {spec.box_max}")
            if np.any(bmin < lo) or np.any(bmax > hi):
                raise ConfigError(
                    f"box {spec.box_min}..{spec.box_max} does not fit inside "
                    f"sample extent {tuple(lo)}..{tuple(hi)}"
                )
        elif spec.kind == "body_with_bed":
            semi = np.asarray(spec.semiaxes)
            if np.any(semi <= 0):
                raise ConfigError(f"semiaxes must be positive, got {spec.semiaxes}")
            c = np.asarray(spec.center)
            if np.any(c - semi < lo) or np.any(c + semi > hi):
                raise ConfigError("ellipsoid body does not fit inside the sample extent")
            smin = np.asarray(spec.slab_min)
            smax = np.asarray(spec.slab_max)
            if np.any(smin >= smax):
                raise ConfigError(f"slab min {spec.slab_min} must be below max {spec.slab_max}")
            if np.any(smin < lo) or np.any(smax > hi):
                raise ConfigError("bed slab does not fit inside the sample extent")

    def to_dict(self) -> dict:
        spec = self.resolved()
        out = {
            "kind": spec.kind,
            "dims": list(spec.dims),
            "spacing": list(spec.spacing),
            "origin": list(spec.origin),
            "body_intensity": spec.body_intensity,
            "background_intensity": spec.background_intensity,
            "noise_amplitude": spec.noise_amplitude,
        }
        for name in ("center", "radius", "box_min", "box_max", "semiaxes", "slab_min", "slab_max"):
            value = getattr(spec, name)
            if value is not None:
                out[name] = list(value) if isinstance(value, tuple) else value
        return out


def _voxel_centers(spec: PhantomSpec):
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing
    ox, oy, oz = spec.origin
    xs = ox + np.arange(nx, dtype=np.float64) * sx
    ys = oy + np.arange(ny, dtype=np.float64) * sy
    zs = oz + np.arange(nz, dtype=np.float64) * sz
    return xs[:, None, None], ys[None, :, None], zs[None, None, :]


def generate(spec: PhantomSpec, seed: int = 0):
    """Rasterize the phantom.

    Returns:
        (volume, truth), where truth is a SphereTruth, BoxTruth, or
        BodyWithBedTruth for the analytic shape.

    The same spec and seed always produce a bit-identical volume; with
    zero noise amplitude the seed does not matter at all.
    """
    spec.validate()
    spec = spec.resolved()
    X, Y, Z = _voxel_centers(spec)

    if spec.kind in ("sphere", "border_touching_sphere"):
        cx, cy, cz = spec.center
        inside = (X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2 <= spec.radius**2
        truth = SphereTruth(center=tuple(spec.center), radius=float(spec.radius))
    elif spec.kind == "box":
        lo = spec.box_min
        hi = spec.box_max
        inside = (
            (X >= lo[0]) & (X <= hi[0])
            & (Y >= lo[1]) & (Y <= hi[1])
            & (Z >= lo[2]) & (Z <= hi[2])
        )
        truth = BoxTruth(box_min=tuple(spec.box_min), box_max=tuple(spec.box_max))
    elif spec.kind == "body_with_bed":
        cx, cy, cz = spec.center
        ax, ay, az = spec.semiaxes
        body = ((X - cx) / ax) ** 2 + ((Y - cy) / ay) ** 2 + ((Z - cz) / az) ** 2 <= 1.0
        slab_truth = BoxTruth(box_min=tuple(spec.slab_min), box_max=tuple(spec.slab_max))
        lo = spec.slab_min
        hi = spec.slab_max
        slab = (
            (X >= lo[0]) & (X <= hi[0])
            & (Y >= lo[1]) & (Y <= hi[1])
            & (Z >= lo[2]) & (Z <= hi[2])
        )
        inside = body | slab
        truth = BodyWithBedTruth(
            body_center=tuple(spec.center),
            body_semiaxes=tuple(spec.semiaxes),
            slab=slab_truth,
        )
    else:  # pragma: no cover - validate() rejects unknown kinds
        raise ConfigError(f"unknown phantom kind {spec.kind!r}")

    grid = np.where(
        inside,
        np.float64(spec.body_intensity),
        np.float64(spec.background_intensity),
    )
    if spec.noise_amplitude > 0:
        rng = np.random.default_rng(seed)
        grid = grid + rng.uniform(
            -spec.noise_amplitude, spec.noise_amplitude, size=grid.shape
        )
    volume = Volume.from_grid(grid, spacing=spec.spacing, origin=spec.origin)
    logger.debug(
        "generated %s phantom, %d of %d voxels body",
        spec.kind, int(inside.sum()), volume.voxel_count,
    )
    return volume, truth
