"""Binary matrix files.

Layout (all little-endian)::

    b"ISNM" | u32 version (=1) | u64 rows | u64 cols | rows*cols float64

with the payload in column-major order.  The headerless streaming variant
used on standard input is a sequence of ``u64 frame_count | payload``
chunks, each payload holding ``frame_count`` frames of a fixed length.
"""
from __future__ import annotations

import os
import struct
from typing import BinaryIO, Iterator, Union

import numpy as np

from .core import as_nonneg
from .errors import BadMagic, NonFiniteEntry, TruncatedPayload, UnsupportedFormat

MAGIC = b"ISNM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
_COUNT = struct.Struct("<Q")

PathLike = Union[str, os.PathLike]


def encode_matrix(m) -> bytes:
    m = as_nonneg(m, "matrix", ndim=2)
    rows, cols = m.shape
    payload = np.asarray(m, dtype="<f8").tobytes(order="F")
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + payload


def read_matrix(fh: BinaryIO) -> np.ndarray:
    header = fh.read(_HEADER.size)
    if len(header) < _HEADER.size:
        if header[:4] != MAGIC[: len(header[:4])]:
            raise BadMagic("not an ISNM matrix file")
        raise TruncatedPayload("file ends inside the header")
    magic, version, rows, cols = _HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedFormat(f"unsupported matrix format version {version}")
    nbytes = rows * cols * 8
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise TruncatedPayload(
            f"header declares {rows}x{cols} but payload holds {len(payload) // 8} values"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteEntry("matrix file contains NaN or infinite values")
    return data.reshape((rows, cols), order="F")


def save_matrix(path: PathLike, m) -> None:
    blob = encode_matrix(m)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_matrix(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        m = read_matrix(fh)
        if fh.read(1):
            raise TruncatedPayload(f"{path}: trailing bytes after payload")
    return m


def write_chunk(fh: BinaryIO, frames) -> None:
    frames = as_nonneg(frames, "frames", ndim=2)
    fh.write(_COUNT.pack(frames.shape[1]))
    fh.write(np.asarray(frames, dtype="<f8").tobytes(order="F"))


def iter_chunks(fh: BinaryIO, n_features: int) -> Iterator[np.ndarray]:
    """Yield ``n_features x count`` blocks from a chunked frame stream."""
    while True:
        head = fh.read(_COUNT.size)
        if not head:
            return
        if len(head) < _COUNT.size:
            raise TruncatedPayload("stream ends inside a chunk header")
        (count,) = _COUNT.unpack(head)
        nbytes = count * n_features * 8
        payload = fh.read(nbytes)
        if len(payload) != nbytes:
            raise TruncatedPayload(f"chunk declares {count} frames but the stream ended early")
        block = np.frombuffer(payload, dtype="<f8").reshape((n_features, count), order="F")
        if not np.all(np.isfinite(block)):
            raise NonFiniteEntry("stream chunk contains NaN or infinite values")
        yield np.asfortranarray(block, dtype=np.float64)
