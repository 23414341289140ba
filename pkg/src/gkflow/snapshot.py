"""GKF1 binary snapshots of single fields, and portable-graymap export.

Layout (little-endian)::

    b"GKF1"
    u32 flags          bit 0: full4d grid, bit 1: complex samples
    u32 size[naxes]    naxes = 2 (reduced2d) or 4 (full4d)
    f64 period[naxes]
    f64 samples        row-major; complex stored as interleaved (re, im)

A snapshot on disk is a directory holding one ``<name>.gkf`` file per field.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import FULL, REDUCED, GridSpec, ScalarField

MAGIC = b"GKF1"
FLAG_FULL = 1
FLAG_COMPLEX = 2


def encode(f: ScalarField) -> bytes:
    spec = f.spec
    flags = (FLAG_FULL if spec.mode == FULL else 0) | (0 if f.is_real else FLAG_COMPLEX)
    n = len(spec.sizes)
    head = MAGIC + struct.pack(f"<I{n}I{n}d", flags, *spec.sizes, *spec.periods)
    if f.is_real:
        body = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    else:
        body = np.ascontiguousarray(f.values, dtype="<c16").view("<f8").tobytes()
    return head + body


def decode(data: bytes) -> ScalarField:
    if data[:4] != MAGIC:
        raise ConfigError("not a GKF1 snapshot (bad magic)")
    (flags,) = struct.unpack_from("<I", data, 4)
    n = 4 if flags & FLAG_FULL else 2
    off = 8
    sizes = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    periods = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    spec = GridSpec(FULL if flags & FLAG_FULL else REDUCED, sizes, periods)
    count = int(np.prod(sizes)) * (2 if flags & FLAG_COMPLEX else 1)
    if len(data) - off != 8 * count:
        raise ConfigError(f"GKF1 payload has {len(data) - off} bytes, expected {8 * count}")
    raw = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    if flags & FLAG_COMPLEX:
        values = raw.view("<c16").reshape(sizes)
    else:
        values = raw.reshape(sizes)
    return ScalarField(spec, values.astype(values.dtype.newbyteorder("=")))


def write_field(path, f: ScalarField):
    Path(path).write_bytes(encode(f))


def read_field(path) -> ScalarField:
    return decode(Path(path).read_bytes())


def write_snapshot(directory, fields: dict):
    """Write ``{name: ScalarField}`` as ``directory/<name>.gkf``; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(fields):
        p = d / f"{name}.gkf"
        write_field(p, fields[name])
        paths.append(p)
    return paths


def read_snapshot(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"snapshot directory {str(d)!r} does not exist")
    return {p.stem: read_field(p) for p in sorted(d.glob("*.gkf"))}


def emit_heatmap(snapshot, name, path):
    """Write a binary PGM of field ``name`` scaled linearly to 0..255.

    ``snapshot`` is a snapshot directory or a ``{name: field}`` mapping.
    Returns (min, max) of the field; the range is also stored as a PGM comment.
    Rows of the image run along x1, columns along x3.
    """
    fields = snapshot if isinstance(snapshot, dict) else read_snapshot(snapshot)
    if name not in fields:
        raise ConfigError(f"snapshot has no field {name!r}; available: {sorted(fields)}", key="field")
    f = fields[name]
    if not f.spec.reduced2d:
        raise ConfigError("heatmaps are only available for reduced2d snapshots", key="field")
    v = f.values if f.is_real else np.abs(f.values)
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        pix = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pix = np.full(v.shape, 128, dtype=np.uint8)
    rows, cols = pix.shape
    header = f"P5\n# field={name} min={lo!r} max={hi!r}\n{cols} {rows}\n255\n".encode()
    Path(path).write_bytes(header + pix.tobytes())
    return lo, hi
