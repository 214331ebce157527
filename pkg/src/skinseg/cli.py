"""Command line interface.

Subcommands:
    segment: volume file -> surface mesh (+ isovalue report JSON).
    compare: two meshes -> distance report JSON + per-vertex CSVs.
    batch: manifest of subject pairs -> meshes + run report, optionally
        across worker processes.
    phantom: write an analytic phantom volume + ground-truth JSON.
    bench: time segmentation across grid sizes and fit the scaling slope.

Exit codes: 0 success, 1 unreadable or malformed files, 2 degenerate
volume, 3 invalid configuration or manifest, 4 empty geometry after
cropping, 5 batch completed with failed subjects.  The SKINSEG_LOG
environment variable (error, warn, info, debug) controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateVolumeError,
    EmptyMeshError,
    MeshFormatError,
    VolumeFormatError,
)
from .estimators import SkinSegmenter, SurfaceExtractor
from .metrics import directed_hausdorff, export_per_vertex_scalars
from .phantom import KINDS, PhantomSpec, generate
from .segmentation import SegmentationConfig, save_label_grid, segment_volume
from .surface import crop_mesh, export_mesh, import_mesh, is_watertight
from .volume_io import load_volume, save_volume

logger = logging.getLogger(__name__)

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _parse_ints(text: str, expected: int | None, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from exc
    if expected is not None and len(values) not in (1, expected):
        raise ConfigError(f"{flag} expects 1 or {expected} values, got {text!r}")
    if expected is not None and len(values) == 1:
        values = values * expected
    return values


def _parse_floats(text: str, expected: int, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from exc
    if len(values) != expected:
        raise ConfigError(f"{flag} expects {expected} values, got {text!r}")
    return values


def _parse_crop_box(text: str):
    x0, y0, z0, x1, y1, z1 = _parse_floats(text, 6, "--crop")
    lo = (x0, y0, z0)
    hi = (x1, y1, z1)
    if any(a > b for a, b in zip(lo, hi)):
        raise ConfigError(f"crop box min {lo} exceeds max {hi}")
    return lo, hi


def _add_segmentation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--isovalue-strategy", default="fixed", metavar="NAME",
        help="fixed (threshold normalized intensities) or gradient "
        "(threshold normalized gradient magnitude); default fixed",
    )
    parser.add_argument(
        "--isovalue", type=float, default=None, metavar="V",
        help="threshold in (0, 1); default 0.1 for fixed, 0.01 for gradient",
    )
    parser.add_argument(
        "--connectivity", type=int, default=4, metavar="N",
        help="flood fill neighborhood, 4 or 8 (default 4)",
    )
    parser.add_argument(
        "--pad", type=int, default=1, metavar="N",
        help="voxels of background padding around the volume (default 1)",
    )
    parser.add_argument(
        "--subsample", default="1", metavar="F",
        help="decimation factor, single integer or fx,fy,fz (default 1)",
    )


def _config_from_args(args) -> SegmentationConfig:
    return SegmentationConfig(
        isovalue_strategy=args.isovalue_strategy,
        isovalue=args.isovalue,
        connectivity=args.connectivity,
        pad_width=args.pad,
        subsample_factor=_parse_ints(args.subsample, 3, "--subsample"),
    )


class _ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors map to the configuration exit code.

    Also treats any token starting with a minus and a digit as a value,
    so crop boxes with negative world coordinates (--crop -10,0,...)
    parse without needing the --crop=... form.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # argparse assigns its matcher per instance; widen it to cover
        # comma-joined tuples like -10,0,-10,...
        self._negative_number_matcher = re.compile(r"^-\d|^-\.\d")

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="skinseg",
        description="Skin surface segmentation and mesh comparison pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_segment = sub.add_parser(
        "segment", help="segment a volume and export the skin surface mesh"
    )
    p_segment.add_argument("input", help="volume file (NIfTI-1 or rawvol)")
    p_segment.add_argument(
        "--format", default=None, metavar="FMT",
        help="input format: nifti1 or rawvol (default: infer from name)",
    )
    _add_segmentation_flags(p_segment)
    p_segment.add_argument(
        "-o", "--output", required=True, metavar="MESH",
        help="output mesh path (.obj or .ply); the isovalue report lands "
        "next to it as <stem>.isovalue.json",
    )
    p_segment.add_argument(
        "--labels", default=None, metavar="PATH",
        help="optionally write the label grid as rawvol (dtype u8)",
    )

    p_compare = sub.add_parser(
        "compare", help="compare two meshes with directed Hausdorff distances"
    )
    p_compare.add_argument("mesh_a", help="first mesh (.obj or .ply)")
    p_compare.add_argument("mesh_b", help="second mesh (.obj or .ply)")
    p_compare.add_argument(
        "--crop", action="append", default=[], metavar="X0,Y0,Z0,X1,Y1,Z1",
        help="keep-region box in mm applied to both meshes before "
        "comparison; repeatable, boxes union",
    )
    p_compare.add_argument(
        "-o", "--output", required=True, metavar="REPORT",
        help="report JSON path; per-vertex CSVs land next to it",
    )

    p_batch = sub.add_parser(
        "batch", help="run segment+compare over a manifest of subject pairs"
    )
    p_batch.add_argument("manifest", help="manifest JSON listing subjects")
    p_batch.add_argument(
        "--out-dir", required=True, metavar="DIR",
        help="output directory (meshes per subject + report.json)",
    )
    _add_segmentation_flags(p_batch)
    p_batch.add_argument(
        "--jobs", type=int, default=1, metavar="N",
        help="worker processes (default 1); results are identical either way",
    )

    p_phantom = sub.add_parser(
        "phantom", help="generate an analytic phantom volume with ground truth"
    )
    p_phantom.add_argument("output", help="output base path (writes <base>.rawvol.* and <base>.truth.json)")
    p_phantom.add_argument(
        "--kind", default="sphere", metavar="KIND",
        help="one of: " + ", ".join(KINDS),
    )
    p_phantom.add_argument("--dims", default="64,64,64", metavar="NX,NY,NZ")
    p_phantom.add_argument("--spacing", default="1,1,1", metavar="SX,SY,SZ")
    p_phantom.add_argument("--origin", default="0,0,0", metavar="OX,OY,OZ")
    p_phantom.add_argument("--body-intensity", type=float, default=1.0)
    p_phantom.add_argument("--background-intensity", type=float, default=0.0)
    p_phantom.add_argument("--noise", type=float, default=0.0, metavar="AMP",
                           help="uniform noise amplitude (default 0)")
    p_phantom.add_argument("--seed", type=int, default=0, help="noise RNG seed")
    p_phantom.add_argument("--center", default=None, metavar="X,Y,Z")
    p_phantom.add_argument("--radius", type=float, default=None)
    p_phantom.add_argument("--box-min", default=None, metavar="X,Y,Z")
    p_phantom.add_argument("--box-max", default=None, metavar="X,Y,Z")
    p_phantom.add_argument("--semiaxes", default=None, metavar="AX,AY,AZ")
    p_phantom.add_argument("--slab-min", default=None, metavar="X,Y,Z")
    p_phantom.add_argument("--slab-max", default=None, metavar="X,Y,Z")

    p_bench = sub.add_parser(
        "bench", help="time segmentation across grid sizes and fit the scaling slope"
    )
    p_bench.add_argument(
        "--sizes", default="32,64,96,128", metavar="N1,N2,...",
        help="cubic grid sides to time (default 32,64,96,128)",
    )
    p_bench.add_argument(
        "-o", "--output", required=True, metavar="CSV",
        help="timings CSV path; a JSON summary with the fitted log-log "
        "slope lands next to it",
    )

    return parser


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------


def cmd_segment(args) -> int:
    config = _config_from_args(args)
    config.validate()
    volume = load_volume(args.input, args.format)

    segmenter = SkinSegmenter(
        isovalue_strategy=config.isovalue_strategy,
        isovalue=config.isovalue,
        connectivity=config.connectivity,
        pad_width=config.pad_width,
        subsample_factor=config.subsample_factor,
    )
    labels = segmenter.fit(volume).transform(volume)
    report = segmenter.isovalue_report_
    mesh = SurfaceExtractor().fit(labels).transform(labels)

    out_path = Path(args.output)
    export_mesh(mesh, out_path)
    report_path = out_path.with_suffix("").with_name(out_path.with_suffix("").name + ".isovalue.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if args.labels:
        save_label_grid(labels, args.labels)

    print(
        f"{args.input}: {mesh.vertex_count} vertices, {mesh.triangle_count} triangles, "
        f"watertight={is_watertight(mesh)}, isovalue={report.isovalue} ({report.strategy})"
    )
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def cmd_compare(args) -> int:
    boxes = [_parse_crop_box(text) for text in args.crop]
    mesh_a = import_mesh(args.mesh_a)
    mesh_b = import_mesh(args.mesh_b)
    if boxes:
        mesh_a = crop_mesh(mesh_a, boxes)
        mesh_b = crop_mesh(mesh_b, boxes)
    if mesh_a.vertex_count == 0:
        raise EmptyMeshError(f"{args.mesh_a}: no vertices remain after cropping")
    if mesh_b.vertex_count == 0:
        raise EmptyMeshError(f"{args.mesh_b}: no vertices remain after cropping")

    forward = directed_hausdorff(mesh_a, mesh_b, "a_to_b")
    backward = directed_hausdorff(mesh_b, mesh_a, "b_to_a")

    out_path = Path(args.output)
    stem = out_path.with_suffix("")
    export_per_vertex_scalars(forward, Path(str(stem) + ".a_to_b.csv"))
    export_per_vertex_scalars(backward, Path(str(stem) + ".b_to_a.csv"))

    payload = {
        "mesh_a": str(args.mesh_a),
        "mesh_b": str(args.mesh_b),
        "crop_boxes": [[list(lo), list(hi)] for lo, hi in boxes],
        "a_to_b": forward.to_summary_dict(),
        "b_to_a": backward.to_summary_dict(),
        "hausdorff_mm": max(forward.hausdorff, backward.hausdorff),
        "mean_mm": (forward.mean + backward.mean) / 2.0,
    }
    out_path.write_text(json.dumps(payload, indent=2) + "\n")
    print(
        f"hausdorff {payload['hausdorff_mm']:.4f} mm "
        f"(a_to_b {forward.hausdorff:.4f}, b_to_a {backward.hausdorff:.4f})"
    )
    return 0


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------


def _load_manifest(path) -> list[dict]:
    try:
        entries = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"manifest {path} must be a non-empty JSON list")
    seen = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"manifest entry {i} must be an object")
        for key in ("subject_id", "volume_a", "volume_b"):
            if key not in entry:
                raise ConfigError(f"manifest entry {i} lacks required field {key!r}")
        sid = entry["subject_id"]
        if sid in seen:
            raise ConfigError(f"duplicate subject_id {sid!r} in manifest")
        seen.add(sid)
        for key in ("crop_a", "crop_b"):
            if key in entry and entry[key] is not None:
                box = entry[key]
                if len(box) != 6:
                    raise ConfigError(
                        f"manifest entry {i}: {key} must hold 6 numbers (x0,y0,z0,x1,y1,z1)"
                    )
    return entries


def _volume_ref(ref):
    if isinstance(ref, str):
        return ref, None
    if isinstance(ref, dict) and "path" in ref:
        return ref["path"], ref.get("format")
    raise ConfigError(f"volume reference must be a path or an object with a path, got {ref!r}")


def _segment_to_mesh(path, fmt, config):
    t0 = time.perf_counter()
    volume = load_volume(path, fmt)
    t1 = time.perf_counter()
    labels, report = segment_volume(volume, config)
    t2 = time.perf_counter()
    from .surface import extract_surface

    mesh = extract_surface(labels)
    t3 = time.perf_counter()
    return mesh, report, (t1 - t0, t2 - t1, t3 - t2)


def _run_subject(task) -> dict:
    index, entry, config_kwargs, out_dir = task
    config = SegmentationConfig(**config_kwargs)
    subject = str(entry["subject_id"])
    subject_dir = Path(out_dir) / subject
    try:
        subject_dir.mkdir(parents=True, exist_ok=True)
        path_a, fmt_a = _volume_ref(entry["volume_a"])
        path_b, fmt_b = _volume_ref(entry["volume_b"])

        mesh_a, report_a, times_a = _segment_to_mesh(path_a, fmt_a, config)
        mesh_b, report_b, times_b = _segment_to_mesh(path_b, fmt_b, config)

        crops = {}
        for key, mesh in (("crop_a", mesh_a), ("crop_b", mesh_b)):
            box = entry.get(key)
            if box is not None:
                lo, hi = tuple(box[:3]), tuple(box[3:])
                if any(a > b for a, b in zip(lo, hi)):
                    raise ConfigError(f"{key} min {lo} exceeds max {hi}")
                crops[key] = (lo, hi)
        if "crop_a" in crops:
            mesh_a = crop_mesh(mesh_a, [crops["crop_a"]])
        if "crop_b" in crops:
            mesh_b = crop_mesh(mesh_b, [crops["crop_b"]])
        if mesh_a.vertex_count == 0 or mesh_b.vertex_count == 0:
            raise EmptyMeshError(f"subject {subject}: empty mesh after cropping")

        export_mesh(mesh_a, subject_dir / "mesh_a.obj")
        export_mesh(mesh_b, subject_dir / "mesh_b.obj")

        t0 = time.perf_counter()
        forward = directed_hausdorff(mesh_a, mesh_b, "a_to_b")
        backward = directed_hausdorff(mesh_b, mesh_a, "b_to_a")
        compare_s = time.perf_counter() - t0
        export_per_vertex_scalars(forward, subject_dir / "distance.a_to_b.csv")
        export_per_vertex_scalars(backward, subject_dir / "distance.b_to_a.csv")

        return {
            "index": index,
            "subject_id": subject,
            "status": "ok",
            "error": None,
            "isovalue_a": report_a.to_dict(),
            "isovalue_b": report_b.to_dict(),
            "mesh_a": {
                "path": f"{subject}/mesh_a.obj",
                "vertices": mesh_a.vertex_count,
                "triangles": mesh_a.triangle_count,
                "watertight": is_watertight(mesh_a),
            },
            "mesh_b": {
                "path": f"{subject}/mesh_b.obj",
                "vertices": mesh_b.vertex_count,
                "triangles": mesh_b.triangle_count,
                "watertight": is_watertight(mesh_b),
            },
            "a_to_b": forward.to_summary_dict(),
            "b_to_a": backward.to_summary_dict(),
            "hausdorff_mm": max(forward.hausdorff, backward.hausdorff),
            "mean_mm": (forward.mean + backward.mean) / 2.0,
            "timings": {
                "load_s": times_a[0] + times_b[0],
                "segment_s": times_a[1] + times_b[1],
                "surface_s": times_a[2] + times_b[2],
                "compare_s": compare_s,
            },
        }
    except Exception as exc:  # noqa: BLE001 - one bad subject must not kill the batch
        logger.warning("subject %s failed: %s", subject, exc)
        return {
            "index": index,
            "subject_id": subject,
            "status": "error",
            "error": f"{type(exc).__name__}: {exc}",
        }


def cmd_batch(args) -> int:
    config = _config_from_args(args)
    config.validate()
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    entries = _load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    config_kwargs = {
        "isovalue_strategy": config.isovalue_strategy,
        "isovalue": config.isovalue,
        "connectivity": config.connectivity,
        "pad_width": config.pad_width,
        "subsample_factor": tuple(config.subsample_factor),
    }
    tasks = [
        (i, entry, config_kwargs, str(out_dir)) for i, entry in enumerate(entries)
    ]
    if args.jobs == 1:
        rows = [_run_subject(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_subject, tasks))
    rows.sort(key=lambda row: row["index"])
    for row in rows:
        row.pop("index")

    ok = [row for row in rows if row["status"] == "ok"]
    aggregate = {
        "subjects_total": len(rows),
        "subjects_failed": len(rows) - len(ok),
        "hausdorff_mean_mm": float(np.mean([r["hausdorff_mm"] for r in ok])) if ok else None,
        "hausdorff_max_mm": float(np.max([r["hausdorff_mm"] for r in ok])) if ok else None,
        "mean_mean_mm": float(np.mean([r["mean_mm"] for r in ok])) if ok else None,
        "mean_max_mm": float(np.max([r["mean_mm"] for r in ok])) if ok else None,
    }
    report = {"subjects": rows, "aggregate": aggregate}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")

    print(
        f"{len(ok)}/{len(rows)} subjects ok"
        + (f", mean hausdorff {aggregate['hausdorff_mean_mm']:.4f} mm" if ok else "")
    )
    return 5 if len(ok) < len(rows) else 0


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------


def cmd_phantom(args) -> int:
    def triple(text, flag):
        return None if text is None else _parse_floats(text, 3, flag)

    spec = PhantomSpec(
        kind=args.kind,
        dims=_parse_ints(args.dims, 3, "--dims"),
        spacing=triple(args.spacing, "--spacing"),
        origin=triple(args.origin, "--origin"),
        body_intensity=args.body_intensity,
        background_intensity=args.background_intensity,
        noise_amplitude=args.noise,
        center=triple(args.center, "--center"),
        radius=args.radius,
        box_min=triple(args.box_min, "--box-min"),
        box_max=triple(args.box_max, "--box-max"),
        semiaxes=triple(args.semiaxes, "--semiaxes"),
        slab_min=triple(args.slab_min, "--slab-min"),
        slab_max=triple(args.slab_max, "--slab-max"),
    )
    volume, truth = generate(spec, seed=args.seed)

    base = str(args.output)
    if base.endswith(".rawvol"):
        base = base[: -len(".rawvol")]
    save_volume(volume, base + ".rawvol")
    truth_payload = {"spec": spec.to_dict(), "seed": args.seed, "truth": truth.to_dict()}
    Path(base + ".truth.json").write_text(json.dumps(truth_payload, indent=2) + "\n")

    print(f"{base}.rawvol: {spec.kind} phantom, dims {'x'.join(map(str, spec.dims))}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    sizes = _parse_ints(args.sizes, None, "--sizes")
    if len(sizes) < 2:
        raise ConfigError("--sizes needs at least two grid sizes to fit a slope")
    if any(s < 8 for s in sizes):
        raise ConfigError(f"--sizes must all be >= 8, got {sizes}")

    rows = []
    for side in sizes:
        spec = PhantomSpec(
            kind="sphere", dims=(side, side, side), radius=0.35 * (side - 1)
        )
        volume, _ = generate(spec)
        config = SegmentationConfig()
        t0 = time.perf_counter()
        segment_volume(volume, config)
        seconds = time.perf_counter() - t0
        voxels = side**3
        rows.append((side, voxels, seconds))
        logger.info("bench %d^3: %.3f s", side, seconds)

    log_voxels = np.log([r[1] for r in rows])
    log_seconds = np.log([r[2] for r in rows])
    slope = float(np.polyfit(log_voxels, log_seconds, 1)[0])

    out_path = Path(args.output)
    lines = ["size,voxels,seconds"]
    lines.extend(f"{side},{voxels},{seconds!r}" for side, voxels, seconds in rows)
    out_path.write_text("\n".join(lines) + "\n")
    summary = {
        "sizes": [r[0] for r in rows],
        "voxels": [r[1] for r in rows],
        "seconds": [r[2] for r in rows],
        "slope": slope,
    }
    out_path.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")

    print(f"log-log slope {slope:.3f} over sizes {','.join(str(r[0]) for r in rows)}")
    return 0


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


_COMMANDS = {
    "segment": cmd_segment,
    "compare": cmd_compare,
    "batch": cmd_batch,
    "phantom": cmd_phantom,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("SKINSEG_LOG", "warn").lower())
    if level is None:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DegenerateVolumeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EmptyMeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (VolumeFormatError, MeshFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
