import struct

import numpy as np
import pytest

from scenedecor.checkpoint import MAGIC, load_container, save_container
from scenedecor.errors import CheckpointError


def sample_arrays():
    return {
        "w": np.arange(12, dtype=np.float32).reshape(3, 4),
        "b": np.array([1.5, -2.5], dtype=np.float64),
        "step": np.asarray(7.0, dtype=np.float64),  # 0-d
        "ints": np.array([[1, 2], [3, 4]], dtype=np.int64),
    }


class TestRoundTrip:
    def test_arrays_and_meta_survive(self, tmp_path):
        path = tmp_path / "c.sdc"
        meta = {"iteration": 3, "nested": {"a": [1, 2]}}
        save_container(path, sample_arrays(), meta)
        arrays, got_meta = load_container(path)
        assert got_meta == meta
        for name, arr in sample_arrays().items():
            assert arrays[name].dtype == arr.dtype
            assert arrays[name].shape == arr.shape
            np.testing.assert_array_equal(arrays[name], arr)

    def test_repeat_saves_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.sdc", tmp_path / "b.sdc"
        save_container(a, sample_arrays(), {"k": 1})
        save_container(b, sample_arrays(), {"k": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_insertion_order_does_not_matter(self, tmp_path):
        arrays = sample_arrays()
        reordered = dict(reversed(list(arrays.items())))
        a, b = tmp_path / "a.sdc", tmp_path / "b.sdc"
        save_container(a, arrays, {})
        save_container(b, reordered, {})
        assert a.read_bytes() == b.read_bytes()

    def test_no_temp_file_left_behind(self, tmp_path):
        path = tmp_path / "c.sdc"
        save_container(path, sample_arrays(), {})
        assert [p.name for p in tmp_path.iterdir()] == ["c.sdc"]

    def test_non_contiguous_input(self, tmp_path):
        base = np.arange(24, dtype=np.float32).reshape(4, 6)
        view = base[:, ::2]
        path = tmp_path / "c.sdc"
        save_container(path, {"v": view}, {})
        arrays, _ = load_container(path)
        np.testing.assert_array_equal(arrays["v"], view)


class TestCorruption:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.sdc"
        path.write_bytes(b"NOTMINE!" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_container(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "c.sdc"
        save_container(path, sample_arrays(), {})
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(CheckpointError, match="past end"):
            load_container(path)

    def test_corrupt_header_json(self, tmp_path):
        path = tmp_path / "c.sdc"
        header = b"{not json"
        path.write_bytes(MAGIC + struct.pack("<Q", len(header)) + header)
        with pytest.raises(CheckpointError, match="header"):
            load_container(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_container(tmp_path / "absent.sdc")

    def test_unsupported_version(self, tmp_path):
        import json

        path = tmp_path / "c.sdc"
        header = json.dumps({"version": 99, "meta": {}, "arrays": {}}).encode()
        path.write_bytes(MAGIC + struct.pack("<Q", len(header)) + header)
        with pytest.raises(CheckpointError, match="version"):
            load_container(path)
