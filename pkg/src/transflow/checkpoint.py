"""Versioned binary checkpoint / field file.

Layout (all little-endian)::

    header   HEADER struct (see below)
    g        node-major upper triangle: for each node, g_ij for i <= j
    f        one float per node (only if has_f)
    w        leaf density, one float per node
    h        kappa potential, one float per node
    c        m floats, harmonic part of kappa
    crc      uint32 CRC-32 of every preceding byte

Nodes are in row-major order.  The potential ``h`` is stored next to ``w``
so that reloading does not round-trip through ``log`` and resumed runs stay
bit-identical.  The same format is used for user-supplied input fields.
"""

import hashlib
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calculus import FoliationModel
from .errors import CheckpointError
from .geometry import MetricField
from .grid import SCHEMES, ChartGrid

MAGIC = b"TFLWCKPT"
VERSION = 1
FLOW_CODES = {"field": 0, "ricci": 1, "gradient": 2, "gauged": 3}
HEADER = struct.Struct("<8sHB3I3dddQBB32sB")
_F8 = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    g: MetricField
    model: FoliationModel
    f: np.ndarray = None
    t: float = 0.0
    step: int = 0
    dt: float = 0.0
    kind: str = "field"
    scenario_hash: bytes = bytes(32)

    @property
    def grid(self):
        return self.g.grid


def scenario_digest(*parts):
    """SHA-256 over the ``repr`` of the given identifying values."""
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\0")
    return h.digest()


def encode(ck):
    grid = ck.grid
    m = grid.m
    if ck.kind not in FLOW_CODES:
        raise CheckpointError(f"unknown flow kind {ck.kind!r}")
    if len(ck.scenario_hash) != 32:
        raise CheckpointError("scenario hash must be 32 bytes")
    dims = tuple(grid.dims) + (0,) * (3 - m)
    periods = tuple(grid.periods) + (0.0,) * (3 - m)
    header = HEADER.pack(
        MAGIC, VERSION, m, *dims, *periods, float(ck.t), float(ck.dt), int(ck.step),
        FLOW_CODES[ck.kind], SCHEMES.index(grid.scheme), bytes(ck.scenario_hash),
        int(ck.f is not None),
    )
    tri = ck.g.upper_triangle()
    parts = [header, np.moveaxis(tri, 0, -1).astype(_F8).tobytes()]
    if ck.f is not None:
        parts.append(np.asarray(ck.f, dtype=_F8).tobytes())
    parts += [
        ck.model.w.astype(_F8).tobytes(),
        ck.model.h.astype(_F8).tobytes(),
        ck.model.kappa_harmonic.astype(_F8).tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(data):
    if len(data) < HEADER.size + 4:
        raise CheckpointError("file too short for a header")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("CRC mismatch: file is corrupted or truncated")
    (magic, version, m, d0, d1, d2, p0, p1, p2, t, dt, step, kind_code, scheme_code,
     digest, has_f) = HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError("bad magic")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    if m not in (2, 3) or scheme_code >= len(SCHEMES):
        raise CheckpointError("corrupted header")
    kinds = {v: k for k, v in FLOW_CODES.items()}
    if kind_code not in kinds:
        raise CheckpointError(f"unknown flow kind code {kind_code}")
    try:
        grid = ChartGrid((d0, d1, d2)[:m], (p0, p1, p2)[:m], SCHEMES[scheme_code])
    except ValueError as e:
        raise CheckpointError(f"invalid grid in header: {e}") from e
    n = grid.n_nodes
    ntri = m * (m + 1) // 2
    expected = HEADER.size + 8 * (n * ntri + (n if has_f else 0) + 2 * n + m)
    if len(body) != expected:
        raise CheckpointError(f"payload size {len(body)} does not match header ({expected})")
    arr = np.frombuffer(body, dtype=_F8, offset=HEADER.size).astype(float)
    pos = 0

    def take(count):
        nonlocal pos
        out = arr[pos:pos + count]
        pos += count
        return out

    tri = np.moveaxis(take(n * ntri).reshape(grid.dims + (ntri,)), -1, 0)
    f = take(n).reshape(grid.dims).copy() if has_f else None
    w = take(n).reshape(grid.dims)
    h = take(n).reshape(grid.dims)
    c = take(m)
    g = MetricField.from_upper_triangle(grid, tri)
    model = FoliationModel(grid, w, h, c)
    return Checkpoint(g=g, model=model, f=f, t=t, step=int(step), dt=dt,
                      kind=kinds[kind_code], scenario_hash=bytes(digest))


def save(path, ck):
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    data = encode(ck)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from e
    return decode(data)
