"""End-to-end tests for the command line interface.

Every test drives skinseg.cli.main in process and checks exit codes and
produced files, not stdout formatting.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from skinseg.cli import main
from skinseg.phantom import PhantomSpec, generate
from skinseg.segmentation import load_label_grid
from skinseg.surface import import_mesh
from skinseg.volume_io import Volume, load_volume, save_volume


def write_sphere(path, side=16, radius=5.0, noise=0.0, seed=0) -> None:
    spec = PhantomSpec(kind="sphere", dims=(side,) * 3, radius=radius, noise_amplitude=noise)
    volume, _ = generate(spec, seed=seed)
    save_volume(volume, path)


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------


class TestSegment:
    def test_writes_mesh_and_isovalue_report(self, tmp_path, capsys):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        mesh_path = tmp_path / "out" / "skin.obj"
        mesh_path.parent.mkdir()

        code = main(["segment", str(vol_path), "-o", str(mesh_path)])

        assert code == 0
        mesh = import_mesh(mesh_path)
        assert mesh.vertex_count > 0
        report = json.loads((tmp_path / "out" / "skin.isovalue.json").read_text())
        assert report["strategy"] == "fixed"
        assert report["isovalue"] == 0.1
        assert "vertices" in capsys.readouterr().out

    def test_gradient_strategy_default_isovalue(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path),
            "--isovalue-strategy", "gradient",
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 0
        report = json.loads((tmp_path / "skin.isovalue.json").read_text())
        assert report["strategy"] == "gradient"
        assert report["isovalue"] == 0.01

    def test_explicit_isovalue_lands_in_report(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path), "--isovalue", "0.5",
            "-o", str(tmp_path / "skin.ply"),
        ])
        assert code == 0
        report = json.loads((tmp_path / "skin.isovalue.json").read_text())
        assert report["isovalue"] == 0.5

    def test_labels_flag_writes_loadable_grid(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        labels_path = tmp_path / "labels.rawvol"
        code = main([
            "segment", str(vol_path),
            "-o", str(tmp_path / "skin.obj"),
            "--labels", str(labels_path),
        ])
        assert code == 0
        grid = load_label_grid(labels_path)
        # pad=1 grows each dimension by 2
        assert grid.dims == (18, 18, 18)
        assert set(np.unique(grid.labels)) <= {0, 1, 2}

    def test_subsample_triple_is_accepted(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path), "--subsample", "2,2,1",
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 0

    def test_bad_connectivity_exits_3(self, tmp_path, capsys):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path), "--connectivity", "5",
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 3
        assert "error:" in capsys.readouterr().err

    def test_bad_subsample_text_exits_3(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path), "--subsample", "two",
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 3

    def test_bad_strategy_exits_3(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main([
            "segment", str(vol_path), "--isovalue-strategy", "otsu",
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 3

    def test_missing_input_exits_1(self, tmp_path):
        code = main([
            "segment", str(tmp_path / "absent.rawvol"),
            "-o", str(tmp_path / "skin.obj"),
        ])
        assert code == 1

    def test_constant_volume_exits_2(self, tmp_path):
        flat = Volume(
            dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
            data=np.zeros(512, dtype=np.float32),
        )
        vol_path = tmp_path / "flat.rawvol"
        save_volume(flat, vol_path)
        code = main(["segment", str(vol_path), "-o", str(tmp_path / "skin.obj")])
        assert code == 2

    def test_unknown_mesh_suffix_exits_1(self, tmp_path):
        vol_path = tmp_path / "s.rawvol"
        write_sphere(vol_path)
        code = main(["segment", str(vol_path), "-o", str(tmp_path / "skin.stl")])
        assert code == 1


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _segment_to_obj(tmp_path, name, radius) -> Path:
    vol_path = tmp_path / f"{name}.rawvol"
    write_sphere(vol_path, side=20, radius=radius)
    mesh_path = tmp_path / f"{name}.obj"
    assert main(["segment", str(vol_path), "-o", str(mesh_path)]) == 0
    return mesh_path


class TestCompare:
    def test_report_and_csvs(self, tmp_path):
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        mesh_b = _segment_to_obj(tmp_path, "b", radius=7.0)
        report_path = tmp_path / "cmp.json"

        code = main(["compare", str(mesh_a), str(mesh_b), "-o", str(report_path)])

        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["a_to_b"]["direction"] == "a_to_b"
        assert report["b_to_a"]["direction"] == "b_to_a"
        assert report["hausdorff_mm"] == max(
            report["a_to_b"]["hausdorff_mm"], report["b_to_a"]["hausdorff_mm"]
        )
        assert (tmp_path / "cmp.a_to_b.csv").exists()
        assert (tmp_path / "cmp.b_to_a.csv").exists()
        # shells 2 mm apart, mesh quantization adds at most about a voxel
        assert 0.5 < report["hausdorff_mm"] < 4.0

    def test_crop_keeps_box_and_is_applied_to_both(self, tmp_path):
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        mesh_b = _segment_to_obj(tmp_path, "b", radius=7.0)
        report_path = tmp_path / "cmp.json"
        # keep only the x >= center half-space around the spheres
        code = main([
            "compare", str(mesh_a), str(mesh_b),
            "--crop", "9.5,-100,-100,100,100,100",
            "-o", str(report_path),
        ])
        assert code == 0
        full = import_mesh(mesh_a)
        report = json.loads(report_path.read_text())
        assert report["a_to_b"]["vertex_count"] < full.vertex_count
        assert report["crop_boxes"] == [[[9.5, -100, -100], [100, 100, 100]]]

    def test_crop_that_removes_everything_exits_4(self, tmp_path):
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        mesh_b = _segment_to_obj(tmp_path, "b", radius=7.0)
        code = main([
            "compare", str(mesh_a), str(mesh_b),
            "--crop", "500,500,500,600,600,600",
            "-o", str(tmp_path / "cmp.json"),
        ])
        assert code == 4

    def test_malformed_crop_exits_3(self, tmp_path):
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        code = main([
            "compare", str(mesh_a), str(mesh_a),
            "--crop", "1,2,3",
            "-o", str(tmp_path / "cmp.json"),
        ])
        assert code == 3

    def test_inverted_crop_box_exits_3(self, tmp_path):
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        code = main([
            "compare", str(mesh_a), str(mesh_a),
            "--crop", "10,0,0,0,10,10",
            "-o", str(tmp_path / "cmp.json"),
        ])
        assert code == 3

    def test_missing_mesh_exits_1(self, tmp_path):
        code = main([
            "compare", str(tmp_path / "no.obj"), str(tmp_path / "no2.obj"),
            "-o", str(tmp_path / "cmp.json"),
        ])
        assert code == 1

    def test_negative_crop_coordinates_parse(self, tmp_path):
        # scanner world coordinates are routinely negative
        mesh_a = _segment_to_obj(tmp_path, "a", radius=5.0)
        report_path = tmp_path / "cmp.json"
        code = main([
            "compare", str(mesh_a), str(mesh_a),
            "--crop", "-1000,-1000,-1000,1000,1000,1000",
            "-o", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["hausdorff_mm"] == 0.0


class TestUsageErrors:
    def test_unknown_flag_exits_3(self, capsys):
        assert main(["bench", "--walltime", "5", "-o", "x.csv"]) == 3
        assert "error:" in capsys.readouterr().err

    def test_missing_required_output_exits_3(self, tmp_path):
        assert main(["compare", "a.obj", "b.obj"]) == 3

    def test_unknown_command_exits_3(self):
        assert main(["polish"]) == 3

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["--help"])
        assert exc_info.value.code == 0


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------


def _write_manifest(tmp_path, entries) -> Path:
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=2))
    return manifest


def _strip_timings(report: dict) -> dict:
    out = json.loads(json.dumps(report))
    for row in out["subjects"]:
        row.pop("timings", None)
    return out


class TestBatch:
    def _make_pair(self, tmp_path, name, r_a, r_b):
        path_a = tmp_path / f"{name}_a.rawvol"
        path_b = tmp_path / f"{name}_b.rawvol"
        write_sphere(path_a, side=14, radius=r_a)
        write_sphere(path_b, side=14, radius=r_b)
        return {
            "subject_id": name,
            "volume_a": str(path_a),
            "volume_b": {"path": str(path_b), "format": "rawvol"},
        }

    def test_two_subjects_sequential(self, tmp_path):
        entries = [
            self._make_pair(tmp_path, "s1", 4.0, 5.0),
            self._make_pair(tmp_path, "s2", 5.0, 4.0),
        ]
        manifest = _write_manifest(tmp_path, entries)
        out_dir = tmp_path / "out"

        code = main(["batch", str(manifest), "--out-dir", str(out_dir)])

        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert [row["subject_id"] for row in report["subjects"]] == ["s1", "s2"]
        assert all(row["status"] == "ok" for row in report["subjects"])
        assert report["aggregate"]["subjects_total"] == 2
        assert report["aggregate"]["subjects_failed"] == 0
        for name in ("s1", "s2"):
            assert (out_dir / name / "mesh_a.obj").exists()
            assert (out_dir / name / "mesh_b.obj").exists()
            assert (out_dir / name / "distance.a_to_b.csv").exists()
        row = report["subjects"][0]
        assert row["mesh_a"]["path"] == "s1/mesh_a.obj"
        assert row["isovalue_a"]["isovalue"] == 0.1
        assert row["hausdorff_mm"] == max(
            row["a_to_b"]["hausdorff_mm"], row["b_to_a"]["hausdorff_mm"]
        )

    def test_failing_subject_recorded_and_exit_5(self, tmp_path):
        good = self._make_pair(tmp_path, "good", 4.0, 5.0)
        bad = {
            "subject_id": "bad",
            "volume_a": str(tmp_path / "missing.rawvol"),
            "volume_b": good["volume_a"],
        }
        manifest = _write_manifest(tmp_path, [bad, good])
        out_dir = tmp_path / "out"

        code = main(["batch", str(manifest), "--out-dir", str(out_dir)])

        assert code == 5
        report = json.loads((out_dir / "report.json").read_text())
        statuses = {row["subject_id"]: row["status"] for row in report["subjects"]}
        assert statuses == {"bad": "error", "good": "ok"}
        bad_row = report["subjects"][0]
        assert "VolumeFormatError" in bad_row["error"]
        assert report["aggregate"]["subjects_failed"] == 1
        assert report["aggregate"]["hausdorff_mean_mm"] is not None

    def test_parallel_matches_sequential(self, tmp_path):
        entries = [
            self._make_pair(tmp_path, "s1", 4.0, 5.0),
            self._make_pair(tmp_path, "s2", 5.0, 4.5),
        ]
        manifest = _write_manifest(tmp_path, entries)
        out_seq = tmp_path / "seq"
        out_par = tmp_path / "par"

        assert main(["batch", str(manifest), "--out-dir", str(out_seq)]) == 0
        assert main(["batch", str(manifest), "--out-dir", str(out_par), "--jobs", "2"]) == 0

        for name in ("s1", "s2"):
            for fname in ("mesh_a.obj", "mesh_b.obj", "distance.a_to_b.csv", "distance.b_to_a.csv"):
                assert (out_seq / name / fname).read_bytes() == (out_par / name / fname).read_bytes()
        rep_seq = _strip_timings(json.loads((out_seq / "report.json").read_text()))
        rep_par = _strip_timings(json.loads((out_par / "report.json").read_text()))
        assert rep_seq == rep_par

    def test_crop_fields_are_applied(self, tmp_path):
        entry = self._make_pair(tmp_path, "s1", 5.0, 5.0)
        # spheres are centered at 6.5 in a 14-wide grid; keep the upper-x half
        entry["crop_a"] = [6.5, -100, -100, 100, 100, 100]
        entry["crop_b"] = [6.5, -100, -100, 100, 100, 100]
        manifest = _write_manifest(tmp_path, [entry])
        out_dir = tmp_path / "out"

        code = main(["batch", str(manifest), "--out-dir", str(out_dir)])

        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        row = report["subjects"][0]
        mesh = import_mesh(out_dir / "s1" / "mesh_a.obj")
        assert mesh.vertices[:, 0].min() >= 6.5
        assert row["mesh_a"]["watertight"] is False

    def test_manifest_not_a_list_exits_3(self, tmp_path):
        manifest = _write_manifest(tmp_path, {"subject_id": "x"})
        code = main(["batch", str(manifest), "--out-dir", str(tmp_path / "out")])
        assert code == 3

    def test_duplicate_subject_ids_exit_3(self, tmp_path):
        entry = self._make_pair(tmp_path, "dup", 4.0, 5.0)
        manifest = _write_manifest(tmp_path, [entry, dict(entry)])
        code = main(["batch", str(manifest), "--out-dir", str(tmp_path / "out")])
        assert code == 3

    def test_missing_manifest_exits_3(self, tmp_path):
        code = main([
            "batch", str(tmp_path / "absent.json"), "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 3

    def test_manifest_entry_without_volume_exits_3(self, tmp_path):
        manifest = _write_manifest(tmp_path, [{"subject_id": "x", "volume_a": "a.rawvol"}])
        code = main(["batch", str(manifest), "--out-dir", str(tmp_path / "out")])
        assert code == 3

    def test_jobs_zero_exits_3(self, tmp_path):
        entry = self._make_pair(tmp_path, "s1", 4.0, 5.0)
        manifest = _write_manifest(tmp_path, [entry])
        code = main([
            "batch", str(manifest), "--out-dir", str(tmp_path / "out"), "--jobs", "0",
        ])
        assert code == 3


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------


class TestPhantom:
    def test_sphere_outputs(self, tmp_path):
        base = tmp_path / "ph"
        code = main(["phantom", str(base), "--kind", "sphere", "--dims", "12,12,12"])
        assert code == 0
        volume = load_volume(tmp_path / "ph.rawvol")
        assert volume.dims == (12, 12, 12)
        truth = json.loads((tmp_path / "ph.truth.json").read_text())
        assert truth["spec"]["kind"] == "sphere"
        assert truth["truth"]["shape"] == "sphere"
        assert truth["truth"]["radius"] == pytest.approx(0.25 * 11)

    def test_rawvol_suffix_is_normalized(self, tmp_path):
        code = main(["phantom", str(tmp_path / "ph.rawvol"), "--dims", "10,10,10"])
        assert code == 0
        assert (tmp_path / "ph.rawvol.json").exists()
        assert (tmp_path / "ph.truth.json").exists()

    def test_noise_seed_determinism(self, tmp_path):
        for name, seed in (("n1", 7), ("n2", 7), ("n3", 8)):
            code = main([
                "phantom", str(tmp_path / name), "--dims", "10,10,10",
                "--noise", "0.2", "--seed", str(seed),
            ])
            assert code == 0
        read = lambda n: (tmp_path / f"{n}.rawvol.bin").read_bytes()
        assert read("n1") == read("n2")
        assert read("n1") != read("n3")

    def test_unknown_kind_exits_3(self, tmp_path):
        code = main(["phantom", str(tmp_path / "ph"), "--kind", "torus"])
        assert code == 3

    def test_body_with_bed_truth_fields(self, tmp_path):
        code = main([
            "phantom", str(tmp_path / "bed"), "--kind", "body_with_bed",
            "--dims", "24,24,24",
        ])
        assert code == 0
        truth = json.loads((tmp_path / "bed.truth.json").read_text())
        assert truth["truth"]["shape"] == "body_with_bed"
        assert "slab" in truth["truth"]


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


class TestBench:
    def test_writes_csv_and_slope_json(self, tmp_path):
        out_csv = tmp_path / "bench.csv"
        code = main(["bench", "--sizes", "8,12,16", "-o", str(out_csv)])
        assert code == 0
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "size,voxels,seconds"
        assert len(lines) == 4
        assert lines[1].startswith("8,512,")
        summary = json.loads((tmp_path / "bench.json").read_text())
        assert summary["sizes"] == [8, 12, 16]
        assert isinstance(summary["slope"], float)

    def test_single_size_exits_3(self, tmp_path):
        code = main(["bench", "--sizes", "32", "-o", str(tmp_path / "b.csv")])
        assert code == 3

    def test_tiny_size_exits_3(self, tmp_path):
        code = main(["bench", "--sizes", "4,8", "-o", str(tmp_path / "b.csv")])
        assert code == 3
