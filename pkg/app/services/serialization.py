"""
Versioned binary model files.

Layout (little-endian)::

    magic    8 bytes  b"FEDSIMW\\x00"
    version  u32
    count    u32
    count x (name_len u32, name utf-8, rows u32, cols u32, rows*cols f8 row-major)
"""

import struct
from pathlib import Path

import numpy as np

from app.errors import DataError, StorageError
from app.model.base import ParamSet

MAGIC = b"FEDSIMW\x00"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def encode_params(params: ParamSet) -> bytes:
    """Binary image of every matrix in ``params``, in entry order."""
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(params))]
    for entry in params:
        name = entry.name.encode("utf-8")
        rows, cols = entry.matrix.shape
        chunks.append(_U32.pack(len(name)))
        chunks.append(name)
        chunks.append(_U32.pack(rows))
        chunks.append(_U32.pack(cols))
        chunks.append(np.ascontiguousarray(entry.matrix, dtype="<f8").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes, path: str) -> None:
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise DataError("Truncated model file", path=self.path, details={"offset": self.offset})
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return int(_U32.unpack(self.take(_U32.size))[0])


def decode_params(data: bytes, path: str = "<bytes>") -> ParamSet:
    """
    Inverse of :func:`encode_params`. Every decoded matrix is trainable.

    Raises:
        DataError: on a bad magic, unknown version, truncation or trailing bytes
    """
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise DataError("Not a model file (bad magic)", path=path)
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise DataError(f"Unsupported model file version {version}", path=path)
    matrices: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise DataError("Matrix name is not valid UTF-8", path=path)
        rows, cols = reader.u32(), reader.u32()
        values = np.frombuffer(reader.take(rows * cols * 8), dtype="<f8")
        matrices[name] = values.reshape(rows, cols).astype(np.float64)
    if reader.offset != len(data):
        raise DataError("Trailing bytes after last matrix", path=path)
    return ParamSet.from_matrices(matrices)


def write_model(params: ParamSet, path: str | Path) -> None:
    """Write ``params`` to ``path``."""
    try:
        Path(path).write_bytes(encode_params(params))
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})


def read_model(path: str | Path) -> ParamSet:
    """Read a model file written by :func:`write_model`."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"Cannot read {path}: {exc}", details={"path": str(path)})
    return decode_params(data, str(path))
