"""Atomic file writes and the binary parameter format."""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import List

import numpy as np

from .errors import GraphParseError

# params.bin layout (all little-endian):
#   magic b"GSSRPRM1" | uint32 matrix count | per matrix: uint32 rows, uint32 cols,
#   rows*cols float64 in row-major order.
PARAMS_MAGIC = b"GSSRPRM1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def pack_matrices(mats: List[np.ndarray]) -> bytes:
    out = [PARAMS_MAGIC, struct.pack("<I", len(mats))]
    for M in mats:
        M = np.ascontiguousarray(M, dtype="<f8")
        out.append(struct.pack("<II", *M.shape))
        out.append(M.tobytes(order="C"))
    return b"".join(out)


def unpack_matrices(data: bytes) -> List[np.ndarray]:
    if not data.startswith(PARAMS_MAGIC):
        raise GraphParseError("params file: bad magic")
    off = len(PARAMS_MAGIC)
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    mats = []
    for _ in range(count):
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        nbytes = rows * cols * 8
        if off + nbytes > len(data):
            raise GraphParseError("params file: truncated matrix payload")
        mats.append(np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off)
                    .reshape(rows, cols).astype(np.float64))
        off += nbytes
    if off != len(data):
        raise GraphParseError("params file: trailing bytes")
    return mats


def write_matrix_csv(path, M: np.ndarray) -> None:
    text = "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in np.asarray(M).tolist())
    atomic_write_text(path, text)


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
