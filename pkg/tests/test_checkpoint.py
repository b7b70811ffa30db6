import struct

import numpy as np
import pytest

from spoofnet.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from spoofnet.errors import DataError


class TestRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "layer.w": rng.standard_normal((3, 4)).astype(np.float32),
            "layer.b": rng.standard_normal(4).astype(np.float64),
            "scalar": np.array(2.5, dtype=np.float32),
        }
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, arrays)
        back = load_checkpoint(path)
        assert set(back) == set(arrays)
        for name in arrays:
            assert back[name].dtype == arrays[name].dtype
            np.testing.assert_array_equal(back[name], arrays[name])

    def test_payload_is_little_endian(self, tmp_path):
        path = tmp_path / "one.ckpt"
        save_checkpoint(path, {"x": np.array([1.0], dtype=np.float32)})
        blob = path.read_bytes()
        assert blob[:4] == MAGIC
        # header(12) + name_len(2) + "x"(1) + dtype/ndim(2) + dim(4) = 21
        assert blob[21:25] == struct.pack("<f", 1.0)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "future.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", 99, 0))
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.ckpt"
        save_checkpoint(path, {"x": np.ones(8, dtype=np.float32)})
        blob = path.read_bytes()
        path.write_bytes(blob[:-6])
        with pytest.raises(DataError):
            load_checkpoint(path)
