"""Binary trajectory files ("PTSF1").

Layout: magic ``PTSF1\\0``; little-endian u32 ``n, P, N, K``; f64 ``box_length``; f64
``times[K]``; then ``K * N * P**n`` complex values as interleaved little-endian f64 pairs,
row-major with time slowest and component next.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .grid import Field, SpaceTimeField, make_grid

MAGIC = b"PTSF1\x00"
_HEADER = struct.Struct("<4Id")


def write_ptsf(path, data) -> None:
    """Write a Field (K = 1, time 0) or a SpaceTimeField atomically."""
    if isinstance(data, Field):
        data = SpaceTimeField(data.grid, [0.0], data.values[None])
    g = data.grid
    K, N = data.values.shape[:2]
    header = MAGIC + _HEADER.pack(g.n, g.points, N, K, g.box_length)
    body = np.ascontiguousarray(data.values, dtype="<c16").tobytes()
    times = np.asarray(data.times, dtype="<f8").tobytes()
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ptsf-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + times + body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(len(MAGIC) + _HEADER.size)
        if raw[:len(MAGIC)] != MAGIC:
            raise ValueError("not a PTSF1 file")
        n, P, N, K, L = _HEADER.unpack(raw[len(MAGIC):])
        times = np.frombuffer(fh.read(8 * K), dtype="<f8")
    return {"n": n, "P": P, "N": N, "K": K, "box_length": L, "times": times.tolist()}


def read_ptsf(path) -> SpaceTimeField:
    h = read_header(path)
    g = make_grid(h["n"], h["P"], h["box_length"])
    offset = len(MAGIC) + _HEADER.size + 8 * h["K"]
    count = h["K"] * h["N"] * g.size
    vals = np.fromfile(path, dtype="<c16", count=count, offset=offset)
    if vals.size != count:
        raise ValueError("truncated PTSF1 file")
    vals = vals.astype(np.complex128).reshape((h["K"], h["N"]) + g.shape)
    return SpaceTimeField(g, h["times"], vals)


def read_field(path, k: int = -1) -> Field:
    """One slice (default: the last) of a stored trajectory."""
    return read_ptsf(path).slice(k)
