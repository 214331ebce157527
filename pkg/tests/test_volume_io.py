"""Volume type invariants and file format round-trips."""

import json

import numpy as np
import pytest
from conftest import make_nifti1

from skinseg.errors import VolumeFormatError
from skinseg.volume_io import (
    Volume,
    VoxelCoord,
    infer_format,
    load_volume,
    save_volume,
    slice_at,
)


def _volume(dims=(4, 3, 2), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), data=None):
    n = dims[0] * dims[1] * dims[2]
    if data is None:
        data = np.arange(n, dtype=np.float32)
    return Volume(dims=dims, spacing=spacing, origin=origin, data=data)


class TestVolume:
    def test_data_is_x_fastest(self):
        v = _volume()
        nx, ny, _ = v.dims
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = int(rng.integers(0, v.dims[0]))
            y = int(rng.integers(0, v.dims[1]))
            z = int(rng.integers(0, v.dims[2]))
            assert v.grid[x, y, z] == v.data[x + nx * (y + ny * z)]

    def test_grid_shares_memory(self):
        v = _volume()
        assert np.shares_memory(v.grid, v.data)

    def test_from_grid_round_trip(self):
        rng = np.random.default_rng(0)
        grid = rng.random((5, 4, 3)).astype(np.float32)
        v = Volume.from_grid(grid, spacing=(0.5, 1.0, 2.0), origin=(1.0, -2.0, 3.0))
        assert v.dims == (5, 4, 3)
        assert np.array_equal(v.grid, grid)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dims": (0, 3, 2)},
            {"dims": (4, 3)},
            {"spacing": (1.0, 0.0, 1.0)},
            {"spacing": (1.0, -1.0, 1.0)},
            {"spacing": (1.0, float("nan"), 1.0)},
            {"origin": (0.0, 0.0)},
            {"data": np.arange(24, dtype=np.float64)},
            {"data": np.arange(23, dtype=np.float32)},
            {"data": np.arange(24, dtype=np.float32).reshape(4, 6)},
        ],
    )
    def test_constructor_rejects_invalid(self, kwargs):
        base = dict(
            dims=(4, 3, 2),
            spacing=(1.0, 1.0, 1.0),
            origin=(0.0, 0.0, 0.0),
            data=np.arange(24, dtype=np.float32),
        )
        base.update(kwargs)
        with pytest.raises(ValueError):
            Volume(**base)

    def test_voxel_coord_bounds(self):
        assert VoxelCoord(0, 0, 0).in_bounds((4, 3, 2))
        assert VoxelCoord(3, 2, 1).in_bounds((4, 3, 2))
        assert not VoxelCoord(4, 0, 0).in_bounds((4, 3, 2))
        assert not VoxelCoord(0, -1, 0).in_bounds((4, 3, 2))


class TestSliceAt:
    def test_slices_are_contiguous_runs(self):
        v = _volume(dims=(4, 4, 2), data=np.arange(32, dtype=np.float32))
        assert np.array_equal(slice_at(v, 0).ravel(order="F"), np.arange(16))
        assert np.array_equal(slice_at(v, 1).ravel(order="F"), np.arange(16, 32))

    def test_slice_shape_is_nx_ny(self):
        v = _volume(dims=(5, 3, 2), data=np.zeros(30, dtype=np.float32))
        assert slice_at(v, 0).shape == (5, 3)

    @pytest.mark.parametrize("z", [-1, 2, 100])
    def test_out_of_range(self, z):
        v = _volume(dims=(4, 4, 2), data=np.zeros(32, dtype=np.float32))
        with pytest.raises(IndexError):
            slice_at(v, z)


class TestRawvol:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(42)
        data = rng.standard_normal(60).astype(np.float32)
        v = _volume(dims=(5, 4, 3), spacing=(0.25, 0.5, 2.0), origin=(-1.0, 2.5, 0.0), data=data)
        save_volume(v, tmp_path / "vol.rawvol")
        back = load_volume(tmp_path / "vol.rawvol")
        assert back.dims == v.dims
        assert back.spacing == v.spacing
        assert back.origin == v.origin
        assert back.data.tobytes() == v.data.tobytes()

    def test_load_accepts_header_path(self, tmp_path):
        v = _volume()
        save_volume(v, tmp_path / "vol.rawvol")
        back = load_volume(tmp_path / "vol.rawvol.json")
        assert back.dims == v.dims

    def test_missing_header(self, tmp_path):
        with pytest.raises(VolumeFormatError):
            load_volume(tmp_path / "nope.rawvol")

    def test_malformed_header_json(self, tmp_path):
        (tmp_path / "bad.rawvol.json").write_text("{not json")
        with pytest.raises(VolumeFormatError, match="malformed"):
            load_volume(tmp_path / "bad.rawvol")

    def test_missing_header_field(self, tmp_path):
        (tmp_path / "bad.rawvol.json").write_text(json.dumps({"dims": [2, 2, 2]}))
        with pytest.raises(VolumeFormatError, match="missing field"):
            load_volume(tmp_path / "bad.rawvol")

    def test_payload_size_mismatch(self, tmp_path):
        v = _volume()
        save_volume(v, tmp_path / "vol.rawvol")
        payload = tmp_path / "vol.rawvol.bin"
        payload.write_bytes(payload.read_bytes()[:-4])
        with pytest.raises(VolumeFormatError, match="bytes"):
            load_volume(tmp_path / "vol.rawvol")

    def test_unsupported_dtype_tag(self, tmp_path):
        header = {"dims": [2, 2, 2], "spacing": [1, 1, 1], "origin": [0, 0, 0], "dtype": "i64"}
        (tmp_path / "bad.rawvol.json").write_text(json.dumps(header))
        (tmp_path / "bad.rawvol.bin").write_bytes(b"\x00" * 64)
        with pytest.raises(VolumeFormatError, match="dtype"):
            load_volume(tmp_path / "bad.rawvol")

    def test_non_finite_samples_rejected_with_count(self, tmp_path):
        data = np.zeros(24, dtype=np.float32)
        data[[1, 7, 20]] = np.nan
        v = _volume(data=data)
        save_volume(v, tmp_path / "vol.rawvol")
        with pytest.raises(VolumeFormatError, match="3 non-finite"):
            load_volume(tmp_path / "vol.rawvol")

    def test_save_rejects_other_formats(self, tmp_path):
        with pytest.raises(VolumeFormatError):
            save_volume(_volume(), tmp_path / "vol.nii", format="nifti1")


class TestNifti1:
    def test_float32_basic(self, tmp_path):
        rng = np.random.default_rng(3)
        grid = rng.random((6, 5, 4)).astype(np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, pixdim=(0.5, 1.0, 2.5)))
        v = load_volume(path)
        assert v.dims == (6, 5, 4)
        assert v.spacing == (0.5, 1.0, 2.5)
        assert v.origin == (0.0, 0.0, 0.0)
        assert np.array_equal(v.grid, grid)

    def test_int16_with_scaling(self, tmp_path):
        grid = np.full((2, 2, 2), 5, dtype=np.int16)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, datatype=4, slope=2.0, inter=1.0))
        v = load_volume(path)
        assert np.all(v.data == np.float32(11.0))

    def test_zero_slope_means_unscaled(self, tmp_path):
        grid = np.full((2, 2, 2), 7, dtype=np.int16)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, datatype=4, slope=0.0, inter=99.0))
        v = load_volume(path)
        assert np.all(v.data == np.float32(7.0))

    @pytest.mark.parametrize(
        "datatype,np_dtype",
        [(2, np.uint8), (4, np.int16), (16, np.float32), (64, np.float64), (512, np.uint16)],
    )
    def test_supported_dtypes(self, tmp_path, datatype, np_dtype):
        rng = np.random.default_rng(datatype)
        if np.issubdtype(np_dtype, np.integer):
            info = np.iinfo(np_dtype)
            grid = rng.integers(max(info.min, -100), 100, size=(3, 3, 3)).astype(np_dtype)
        else:
            grid = rng.random((3, 3, 3)).astype(np_dtype)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, datatype=datatype))
        v = load_volume(path)
        assert np.array_equal(v.grid, grid.astype(np.float32))

    def test_gzip_matches_plain(self, tmp_path):
        rng = np.random.default_rng(9)
        grid = rng.random((4, 4, 4)).astype(np.float32)
        plain = tmp_path / "vol.nii"
        packed = tmp_path / "vol.nii.gz"
        plain.write_bytes(make_nifti1(grid))
        packed.write_bytes(make_nifti1(grid, gz=True))
        a = load_volume(plain)
        b = load_volume(packed)
        assert a.data.tobytes() == b.data.tobytes()

    def test_big_endian(self, tmp_path):
        grid = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, endian=">", pixdim=(2.0, 2.0, 2.0)))
        v = load_volume(path)
        assert v.spacing == (2.0, 2.0, 2.0)
        assert np.array_equal(v.grid, grid)

    def test_vox_offset_honored(self, tmp_path):
        grid = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, vox_offset=400.0))
        v = load_volume(path)
        assert np.array_equal(v.grid, grid)

    def test_truncated_payload(self, tmp_path):
        grid = np.zeros((4, 4, 4), dtype=np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, truncate_payload=8))
        with pytest.raises(VolumeFormatError, match="truncated"):
            load_volume(path)

    def test_bad_magic(self, tmp_path):
        grid = np.zeros((2, 2, 2), dtype=np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, magic=b"xxx\x00"))
        with pytest.raises(VolumeFormatError, match="magic"):
            load_volume(path)

    def test_detached_pair_rejected(self, tmp_path):
        grid = np.zeros((2, 2, 2), dtype=np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, magic=b"ni1\x00"))
        with pytest.raises(VolumeFormatError, match="detached"):
            load_volume(path)

    def test_unsupported_datatype_code(self, tmp_path):
        grid = np.zeros((2, 2, 2), dtype=np.int32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, datatype=8))
        with pytest.raises(VolumeFormatError, match="datatype code 8"):
            load_volume(path)

    def test_4d_rejected(self, tmp_path):
        grid = np.zeros((2, 2, 2), dtype=np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, ndim=4))
        with pytest.raises(VolumeFormatError, match="3D"):
            load_volume(path)

    def test_non_positive_pixdim(self, tmp_path):
        grid = np.zeros((2, 2, 2), dtype=np.float32)
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid, pixdim=(1.0, 0.0, 1.0)))
        with pytest.raises(VolumeFormatError, match="pixdim"):
            load_volume(path)

    def test_non_finite_rejected_with_count(self, tmp_path):
        grid = np.zeros((3, 3, 3), dtype=np.float32)
        grid[0, 0, 0] = np.inf
        grid[1, 1, 1] = np.nan
        path = tmp_path / "vol.nii"
        path.write_bytes(make_nifti1(grid))
        with pytest.raises(VolumeFormatError, match="2 non-finite"):
            load_volume(path)

    def test_too_short_file(self, tmp_path):
        path = tmp_path / "vol.nii"
        path.write_bytes(b"\x00" * 100)
        with pytest.raises(VolumeFormatError, match="too short"):
            load_volume(path)

    def test_not_nifti(self, tmp_path):
        path = tmp_path / "vol.nii"
        path.write_bytes(b"\x00" * 400)
        with pytest.raises(VolumeFormatError, match="sizeof_hdr"):
            load_volume(path)


class TestInferFormat:
    @pytest.mark.parametrize(
        "name,fmt",
        [
            ("scan.nii", "nifti1"),
            ("scan.NII.GZ", "nifti1"),
            ("scan.rawvol", "rawvol"),
            ("scan.rawvol.json", "rawvol"),
        ],
    )
    def test_inference(self, name, fmt):
        assert infer_format(name) == fmt
