"""TTCK1 checkpoint files.

Layout (all integers little-endian)::

    b"TTCK1"                 magic
    uint32 0x01020304        byte-order sentinel
    uint32 d
    uint8  field             0 = float64, 1 = complex128
    uint64 n_1 ... n_d       mode sizes
    uint64 r_0 ... r_d       TT ranks (r_0 = r_d = 1)
    cores in order, each r_{k-1} x n_k x r_k, C order, little-endian IEEE 754

A file written on (or byte-swapped by) a big-endian writer shows the sentinel
as ``0x04030201`` and is rejected rather than silently misread.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..tt import TtTensor

MAGIC = b"TTCK1"
SENTINEL = 0x01020304
_FIELDS = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class TensorFormatError(ValueError):
    """The file is not a valid TTCK1 checkpoint."""


def save_tt(path: str | Path, f: TtTensor) -> None:
    """Write ``f`` atomically (temporary file, then rename)."""
    path = Path(path)
    tag = 1 if f.is_complex else 0
    dtype = _FIELDS[tag]
    header = [MAGIC, struct.pack("<IIB", SENTINEL, f.d, tag),
              struct.pack(f"<{f.d}Q", *f.shape), struct.pack(f"<{f.d + 1}Q", *f.ranks)]
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(header))
            for core in f.cores:
                fh.write(np.ascontiguousarray(core, dtype=dtype).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _take(buf: memoryview, pos: int, size: int, what: str) -> tuple[memoryview, int]:
    if pos + size > len(buf):
        raise TensorFormatError(f"file truncated while reading {what} "
                                f"(need {pos + size} bytes, have {len(buf)})")
    return buf[pos:pos + size], pos + size


def load_tt(path: str | Path) -> TtTensor:
    """Read a checkpoint; any inconsistency raises `TensorFormatError`."""
    buf = memoryview(Path(path).read_bytes())
    head, pos = _take(buf, 0, len(MAGIC), "magic")
    if bytes(head) != MAGIC:
        raise TensorFormatError(f"bad magic {bytes(head)!r}; not a TTCK1 checkpoint")
    raw, pos = _take(buf, pos, 9, "header")
    sentinel, d, tag = struct.unpack("<IIB", raw)
    if sentinel != SENTINEL:
        if sentinel == 0x04030201:
            raise TensorFormatError("byte-order sentinel is swapped: file was written big-endian")
        raise TensorFormatError(f"corrupt byte-order sentinel {sentinel:#010x}")
    if tag not in _FIELDS:
        raise TensorFormatError(f"unknown scalar field tag {tag}")
    if d < 1:
        raise TensorFormatError("tensor order must be at least 1")
    raw, pos = _take(buf, pos, 8 * d, "mode sizes")
    shape = struct.unpack(f"<{d}Q", raw)
    raw, pos = _take(buf, pos, 8 * (d + 1), "ranks")
    ranks = struct.unpack(f"<{d + 1}Q", raw)
    if ranks[0] != 1 or ranks[-1] != 1:
        raise TensorFormatError(f"boundary ranks must be 1, got {ranks[0]} and {ranks[-1]}")
    if min(shape) < 1 or min(ranks) < 1:
        raise TensorFormatError("mode sizes and ranks must be positive")
    dtype = _FIELDS[tag]
    cores = []
    for k in range(d):
        cshape = (ranks[k], shape[k], ranks[k + 1])
        raw, pos = _take(buf, pos, dtype.itemsize * int(np.prod(cshape)), f"core {k}")
        cores.append(np.frombuffer(raw, dtype=dtype).reshape(cshape).astype(dtype.newbyteorder("=")))
    if pos != len(buf):
        raise TensorFormatError(f"{len(buf) - pos} trailing bytes after the last core")
    return TtTensor(cores)
