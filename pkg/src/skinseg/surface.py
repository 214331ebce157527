"""Triangle surface extraction from label grids, plus mesh utilities.

Marching Cubes runs on the binarized labels: every non-background voxel
carries field value 1, background carries 0, and the surface sits at
isolevel 0.5.  Because the field is binary, the linear interpolation
along a crossing edge always lands on the edge midpoint, so every vertex
has exactly one half-integral index coordinate.  Vertices are shared
between adjacent cells through exact integer edge keys, which makes the
extraction deterministic and free of floating-point seam artifacts.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._mc_tables import EDGE_CORNERS, TRI_TABLE
from .errors import MeshFormatError
from .segmentation import BACKGROUND, LabelGrid

logger = logging.getLogger(__name__)

CORNER_OFFSETS = (
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
)

# Midpoint of each edge in doubled cell-local coordinates: the component
# sums of its two corner offsets.  Doubling keeps edge keys integral.
_DOUBLED_MID = tuple(
    tuple(CORNER_OFFSETS[a][i] + CORNER_OFFSETS[b][i] for i in range(3))
    for a, b in EDGE_CORNERS
)


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh in world coordinates (mm).

    Attributes:
        vertices: (n, 3) float64 vertex positions.
        triangles: (m, 3) int32 vertex indices, counterclockwise when
            viewed from outside the enclosed region.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(f"triangles must have shape (m, 3), got {self.triangles.shape}")

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(
            vertices=np.empty((0, 3), dtype=np.float64),
            triangles=np.empty((0, 3), dtype=np.int32),
        )

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Axis-aligned (min, max) corners, or None for an empty mesh."""
        if not len(self.vertices):
            return None
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def extract_surface(grid: LabelGrid) -> TriangleMesh:
    """Extract the boundary of the non-background region as a triangle mesh.

    Args:
        grid: Label grid; every axis must hold at least 2 samples so at
            least one cell exists.

    Returns:
        Mesh in world coordinates with outward-facing triangles.  All
        background (or all body) yields an empty mesh.  A body that
        touches the grid faces is left open there, since no cell exists
        beyond the outermost samples; pad the volume before segmentation
        to avoid that.
    """
    nx, ny, nz = grid.dims
    if min(nx, ny, nz) < 2:
        raise ValueError(f"surface extraction needs at least 2 samples per axis, got {grid.dims}")

    # Bit i of the case index is set when corner i is below the isolevel,
    # i.e. background.
    below = grid.grid == BACKGROUND
    cases = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint8)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        np.bitwise_or(
            cases,
            below[dx : dx + nx - 1, dy : dy + ny - 1, dz : dz + nz - 1].astype(np.uint8)
            << np.uint8(bit),
            out=cases,
        )

    active = np.argwhere((cases != 0) & (cases != 255))
    vertex_ids: dict[tuple[int, int, int], int] = {}
    vertex_keys: list[tuple[int, int, int]] = []
    triangles: list[tuple[int, int, int]] = []
    case_grid = cases

    for cx, cy, cz in active.tolist():
        row = TRI_TABLE[case_grid[cx, cy, cz]]
        for k in range(0, len(row), 3):
            ids = []
            for e in (row[k], row[k + 1], row[k + 2]):
                sx, sy, sz = _DOUBLED_MID[e]
                key = (2 * cx + sx, 2 * cy + sy, 2 * cz + sz)
                vid = vertex_ids.get(key)
                if vid is None:
                    vid = len(vertex_keys)
                    vertex_ids[key] = vid
                    vertex_keys.append(key)
                ids.append(vid)
            # With bits marking background corners, the table order already
            # faces away from the body (positive signed volume).
            triangles.append((ids[0], ids[1], ids[2]))

    if not triangles:
        return TriangleMesh.empty()

    keys = np.asarray(vertex_keys, dtype=np.float64)
    spacing = np.asarray(grid.spacing, dtype=np.float64)
    origin = np.asarray(grid.origin, dtype=np.float64)
    vertices = origin + keys * 0.5 * spacing
    mesh = TriangleMesh(
        vertices=vertices, triangles=np.asarray(triangles, dtype=np.int32)
    )
    logger.debug(
        "extracted %d vertices, %d triangles from %d active cells",
        mesh.vertex_count, mesh.triangle_count, len(active),
    )
    return mesh


def _undirected_edges(triangles: np.ndarray) -> np.ndarray:
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    return np.sort(edges, axis=1)


def is_watertight(mesh: TriangleMesh) -> bool:
    """True when every undirected edge is shared by exactly two triangles.

    An empty mesh is vacuously watertight.
    """
    if not len(mesh.triangles):
        return True
    _, counts = np.unique(_undirected_edges(mesh.triangles), axis=0, return_counts=True)
    return bool((counts == 2).all())


def boundary_edge_count(mesh: TriangleMesh) -> int:
    """Number of undirected edges used by exactly one triangle."""
    if not len(mesh.triangles):
        return 0
    _, counts = np.unique(_undirected_edges(mesh.triangles), axis=0, return_counts=True)
    return int((counts == 1).sum())


def signed_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume; positive for outward-facing orientation."""
    if not len(mesh.triangles):
        return 0.0
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def crop_mesh(mesh: TriangleMesh, boxes) -> TriangleMesh:
    """Keep only vertices inside any of the axis-aligned keep boxes.

    Each box is ((x0, y0, z0), (x1, y1, z1)) in mm, bounds inclusive.
    Triangles that lose a vertex are dropped; surviving vertices keep
    their relative order.
    """
    boxes = list(boxes)
    if not boxes:
        return mesh
    keep = np.zeros(len(mesh.vertices), dtype=bool)
    for lo, hi in boxes:
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if not np.all(lo <= hi):
            raise ValueError(f"crop box min {lo} exceeds max {hi}")
        keep |= np.all((mesh.vertices >= lo) & (mesh.vertices <= hi), axis=1)
    if keep.all():
        return mesh
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    vertices = mesh.vertices[keep]
    if len(mesh.triangles):
        tri_keep = keep[mesh.triangles].all(axis=1)
        triangles = remap[mesh.triangles[tri_keep]].astype(np.int32)
    else:
        triangles = np.empty((0, 3), dtype=np.int32)
    return TriangleMesh(vertices=vertices, triangles=triangles)


# ---------------------------------------------------------------------------
# Mesh file formats
# ---------------------------------------------------------------------------


def infer_mesh_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".ply":
        return "ply"
    raise MeshFormatError(f"cannot infer mesh format from {path}")


def export_mesh(mesh: TriangleMesh, path, format: str | None = None) -> None:
    """Write a mesh as ASCII OBJ or binary little-endian PLY."""
    fmt = format or infer_mesh_format(path)
    if fmt == "obj":
        _write_obj(mesh, path)
    elif fmt == "ply":
        _write_ply(mesh, path)
    else:
        raise MeshFormatError(f"unknown mesh format {fmt!r}")


def import_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an OBJ or PLY mesh.  Faces with more than 3 vertices are
    fan-triangulated."""
    fmt = format or infer_mesh_format(path)
    if fmt == "obj":
        return _read_obj(path)
    if fmt == "ply":
        return _read_ply(path)
    raise MeshFormatError(f"unknown mesh format {fmt!r}")


def _write_obj(mesh: TriangleMesh, path) -> None:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _read_obj(path) -> TriangleMesh:
    vertices = []
    triangles = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            if len(parts) < 4:
                raise MeshFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
            try:
                # OBJ face tokens may carry /texture/normal references.
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: bad face index") from exc
            if any(i < 1 for i in idx):
                raise MeshFormatError(
                    f"{path}:{lineno}: face indices must be positive (1-based)"
                )
            for k in range(1, len(idx) - 1):
                triangles.append([idx[0] - 1, idx[k] - 1, idx[k + 1] - 1])
        # Other directives (vn, vt, o, g, s, usemtl, mtllib) are ignored.

    vert = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tri = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
    if len(tri) and (tri.min() < 0 or tri.max() >= len(vert)):
        raise MeshFormatError(f"{path}: face references vertex beyond the {len(vert)} defined")
    return TriangleMesh(vertices=vert, triangles=tri)


_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _write_ply(mesh: TriangleMesh, path) -> None:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.vertex_count}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        f"element face {mesh.triangle_count}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    body = bytearray()
    body += np.ascontiguousarray(mesh.vertices, dtype="<f4").tobytes()
    if mesh.triangle_count:
        faces = np.empty((mesh.triangle_count, 13), dtype=np.uint8)
        faces[:, 0] = 3
        faces[:, 1:] = (
            np.ascontiguousarray(mesh.triangles, dtype="<i4")
            .view(np.uint8)
            .reshape(mesh.triangle_count, 12)
        )
        body += faces.tobytes()
    Path(path).write_bytes(header.encode("ascii") + bytes(body))


def _read_ply(path) -> TriangleMesh:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise MeshFormatError(f"{path}: not a PLY file")
    header_lines = blob[:end].decode("ascii", "replace").splitlines()
    offset = end + len(b"end_header\n")

    fmt = None
    elements = []  # (name, count, [(kind, prop...)...])
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}: property before any element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt not in ("binary_little_endian", "ascii"):
        raise MeshFormatError(f"{path}: unsupported PLY format {fmt!r}")

    vertices = np.empty((0, 3), dtype=np.float64)
    triangles: list[list[int]] = []
    if fmt == "ascii":
        tokens = blob[offset:].decode("ascii", "replace").split()
        pos = 0
        vertex_rows = []
        try:
            for name, count, props in elements:
                for _ in range(count):
                    row = {}
                    for prop in props:
                        if prop[0] == "list":
                            n = int(tokens[pos]); pos += 1
                            row[prop[3]] = [int(float(tokens[pos + i])) for i in range(n)]
                            pos += n
                        else:
                            row[prop[2]] = float(tokens[pos]); pos += 1
                    if name == "vertex":
                        vertex_rows.append([row["x"], row["y"], row["z"]])
                    elif name == "face":
                        idx = next(v for v in row.values() if isinstance(v, list))
                        for k in range(1, len(idx) - 1):
                            triangles.append([idx[0], idx[k], idx[k + 1]])
        except (IndexError, ValueError, KeyError, StopIteration) as exc:
            raise MeshFormatError(f"{path}: malformed ascii PLY body: {exc}") from exc
        vertices = np.asarray(vertex_rows, dtype=np.float64).reshape(-1, 3)
        tri = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
        return _checked_mesh(path, vertices, tri)

    for name, count, props in elements:
        if name == "vertex":
            if any(p[0] == "list" for p in props):
                raise MeshFormatError(f"{path}: list properties on vertices are unsupported")
            fields = [(p[2], "<" + _PLY_SCALARS[p[1]]) for p in props]
            dtype = np.dtype(fields)
            need = count * dtype.itemsize
            if len(blob) < offset + need:
                raise MeshFormatError(f"{path}: vertex data truncated")
            table = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
            offset += need
            names = {p[2] for p in props}
            if not {"x", "y", "z"} <= names:
                raise MeshFormatError(f"{path}: vertex element lacks x/y/z")
            vertices = np.stack(
                [table["x"], table["y"], table["z"]], axis=1
            ).astype(np.float64)
        elif name == "face":
            if len(props) != 1 or props[0][0] != "list":
                raise MeshFormatError(
                    f"{path}: face element must carry a single list property"
                )
            _, count_type, index_type, _ = props[0]
            csize = np.dtype(_PLY_SCALARS[count_type]).itemsize
            isize = np.dtype(_PLY_SCALARS[index_type]).itemsize
            # Fast path: uniform triangles, the layout this writer emits.
            stride = csize + 3 * isize
            uniform = len(blob) - offset == count * stride and count > 0
            if uniform:
                raw = np.frombuffer(blob, dtype=np.uint8, count=count * stride, offset=offset)
                counts = raw.reshape(count, stride)[:, :csize].copy().view(
                    "<" + _PLY_SCALARS[count_type]
                )
                uniform = bool((counts == 3).all())
            if uniform:
                idx = (
                    raw.reshape(count, stride)[:, csize:].copy()
                    .view("<" + _PLY_SCALARS[index_type])
                    .astype(np.int32)
                )
                triangles = idx
                offset += count * stride
            else:
                cfmt = "<" + _PLY_SCALARS[count_type]
                ifmt = "<" + _PLY_SCALARS[index_type]
                rows = []
                for _ in range(count):
                    if len(blob) < offset + csize:
                        raise MeshFormatError(f"{path}: face data truncated")
                    n = int(np.frombuffer(blob, dtype=cfmt, count=1, offset=offset)[0])
                    offset += csize
                    if len(blob) < offset + n * isize:
                        raise MeshFormatError(f"{path}: face data truncated")
                    idx = np.frombuffer(blob, dtype=ifmt, count=n, offset=offset).astype(int)
                    offset += n * isize
                    for k in range(1, n - 1):
                        rows.append([idx[0], idx[k], idx[k + 1]])
                triangles = np.asarray(rows, dtype=np.int32).reshape(-1, 3)
        else:
            raise MeshFormatError(
                f"{path}: unsupported element {name!r} in binary PLY"
            )

    tri = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
    return _checked_mesh(path, vertices, tri)


def _checked_mesh(path, vertices, triangles) -> TriangleMesh:
    if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshFormatError(
            f"{path}: face references vertex beyond the {len(vertices)} defined"
        )
    return TriangleMesh(vertices=vertices, triangles=triangles)
