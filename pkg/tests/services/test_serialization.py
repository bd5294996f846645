"""Tests for binary model files."""

import struct

import numpy as np
import pytest

from app.errors import DataError, StorageError
from app.model import ParamSet
from app.services.serialization import MAGIC, decode_params, encode_params, read_model, write_model


@pytest.fixture
def params(rng) -> ParamSet:
    """Mixed shapes, a frozen entry and extreme values."""
    big = rng.normal(size=(3, 5))
    big[0, 0] = 1e-300
    big[1, 1] = -0.0
    return ParamSet.from_matrices(
        {"E": rng.normal(size=(4, 2)), "Wup": big, "W.lora_B": np.zeros((3, 1))}, trainable=["Wup"]
    )


class TestModelFile:
    """encode / decode and file I/O."""

    def test_round_trip(self, params, tmp_path):
        """Names, order, shapes and values come back exactly."""
        path = tmp_path / "model.bin"

        write_model(params, path)
        back = read_model(path)

        assert back.names == params.names
        for name in params.names:
            np.testing.assert_array_equal(back[name], params[name])
        assert back.trainable_names == params.names

    def test_layout(self, params):
        """The image starts with the magic, version and matrix count."""
        data = encode_params(params)

        assert data[:8] == MAGIC
        assert struct.unpack("<II", data[8:16]) == (1, 3)

    def test_bad_magic(self, params):
        """Files from other tools are rejected."""
        data = b"NOTMODEL" + encode_params(params)[8:]

        with pytest.raises(DataError, match="bad magic"):
            decode_params(data)

    def test_unknown_version(self, params):
        """A newer format version is rejected."""
        data = bytearray(encode_params(params))
        data[8:12] = struct.pack("<I", 2)

        with pytest.raises(DataError, match="version 2"):
            decode_params(bytes(data))

    def test_truncated(self, params):
        """Missing bytes are reported."""
        with pytest.raises(DataError, match="Truncated"):
            decode_params(encode_params(params)[:-5], "cut.bin")

    def test_trailing_bytes(self, params):
        """Extra bytes after the last matrix are reported."""
        with pytest.raises(DataError, match="Trailing"):
            decode_params(encode_params(params) + b"\x00")

    def test_missing_file(self, tmp_path):
        """An unreadable path is an I/O error."""
        with pytest.raises(StorageError):
            read_model(tmp_path / "absent.bin")
