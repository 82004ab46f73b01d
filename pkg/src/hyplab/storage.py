"""On-disk formats: binary fields, CSV tables, key/value reports.

Binary field layout (all little-endian):

    header, 64 bytes:
        magic   8s   b"HYPFLD\\x00\\x01"
        version u4
        n       u4   spatial dimension
        nt      u8   number of time samples
        nbatch  u8   product of batch axes (1 if none)
        dt      f8
        T       f8
        pad     16 bytes of zeros
    shape   n x u8
    spacing n x f8
    origin  n x f8
    times   nt x f8
    payload float64, row-major (time, batch, x1, ..., xn)
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

MAGIC = b"HYPFLD\x00\x01"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQdd16x")
assert _HEADER.size == 64


@dataclass
class StoredField:
    values: np.ndarray
    times: np.ndarray
    spacing: np.ndarray
    origin: np.ndarray
    dt: float
    T: float


def write_field(path, values, times, grid) -> Path:
    """Write (nt, *batch, *space) samples on ``grid``."""
    path = Path(path)
    values = np.asarray(values, dtype="<f8")
    times = np.asarray(times, dtype="<f8")
    n = grid.n
    if values.shape[0] != times.size or values.shape[values.ndim - n:] != grid.shape:
        raise ValueError("values do not match times and grid")
    nbatch = int(np.prod(values.shape[1: values.ndim - n], dtype=np.int64))
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, times.size, nbatch, float(grid.dt), float(grid.T)))
        fh.write(np.asarray(grid.shape, dtype="<u8").tobytes())
        fh.write(np.asarray(grid.h, dtype="<f8").tobytes())
        fh.write(np.asarray([lo for lo, _ in grid.extents], dtype="<f8").tobytes())
        fh.write(times.tobytes())
        fh.write(np.ascontiguousarray(values).tobytes())
    return path


def read_field(path) -> StoredField:
    raw = Path(path).read_bytes()
    magic, version, n, nt, nbatch, dt, T = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not a field file")
    if version != VERSION:
        raise ValueError(f"unsupported field version {version}")
    off = _HEADER.size

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    shape = tuple(int(s) for s in take(n, "<u8"))
    spacing = take(n, "<f8").copy()
    origin = take(n, "<f8").copy()
    times = take(nt, "<f8").copy()
    lead = (nt,) if nbatch == 1 else (nt, nbatch)
    values = take(int(np.prod(lead + shape)), "<f8").reshape(lead + shape).copy()
    return StoredField(values, times, spacing, origin, dt, T)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Rows are formatted with round-trip float precision for byte-stable output."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def trace_rows(trace):
    """Long format: t, sample, face, x_1..x_n, value (unbatched traces)."""
    vals = trace.values
    if vals.ndim != 2:
        raise ValueError("trace_rows expects an unbatched trace")
    faces = [trace.faces[i] for i in trace.sample_face]
    for k, t in enumerate(trace.times):
        for s in range(vals.shape[1]):
            yield (t, s, faces[s], *trace.coords[s], vals[k, s])


def write_trace_csv(path, trace) -> Path:
    n = trace.coords.shape[1]
    return write_csv(path, ["t", "sample", "face", *[f"x{k + 1}" for k in range(n)], "value"], trace_rows(trace))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def write_report(path, data: dict) -> Path:
    """Key/value report; insertion order kept, no timestamps."""
    path = Path(path)
    text = yaml.safe_dump(_plain(data), sort_keys=False, default_flow_style=False, allow_unicode=True)
    path.write_text(text, encoding="utf-8")
    return path
