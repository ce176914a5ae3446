"""Deterministic serialization: CSV fields, OBJ meshes, JSON reports, TOML configs.

Floats are written with 17 significant digits so that values round-trip
exactly; line endings are always ``\\n``.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import PreconditionError


class InputError(PreconditionError):
    """Malformed or truncated input file."""


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def write_csv(path, header, columns):
    """Write equal-length columns under ``header``; returns the path."""
    cols = [np.asarray(c, float).ravel() for c in columns]
    n = {c.size for c in cols}
    if len(n) != 1 or len(header) != len(cols):
        raise PreconditionError("CSV columns must match the header and have equal length")
    lines = [",".join(header)]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(cols[0].size)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def read_csv(path, expected=None):
    """Read a CSV written by ``write_csv``; returns ``(header, dict of arrays)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    rows = [r for r in text.split("\n") if r]
    if not rows:
        raise InputError(f"{path} is empty")
    header = rows[0].split(",")
    if expected is not None and header != list(expected):
        raise InputError(f"{path}: header {header} != {list(expected)}")
    if not text.endswith("\n"):
        raise InputError(f"{path} is truncated")
    data = []
    for k, r in enumerate(rows[1:], start=2):
        parts = r.split(",")
        if len(parts) != len(header):
            raise InputError(f"{path}:{k}: expected {len(header)} fields, got {len(parts)}")
        try:
            data.append([float(p) for p in parts])
        except ValueError as e:
            raise InputError(f"{path}:{k}: {e}") from e
    arr = np.array(data, float).reshape(-1, len(header))
    return header, {h: arr[:, i] for i, h in enumerate(header)}


def write_obj(path, vertices, faces, comment=None):
    """Triangle/quad mesh with 1-based face indices."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    for v in np.asarray(vertices, float):
        lines.append("v " + " ".join(fmt(c) for c in v))
    for f in faces:
        lines.append("f " + " ".join(str(int(i) + 1) for i in f))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def grid_triangles(present, periodic=False):
    """Triangles of a structured ``(n_i, n_j)`` node array, two per complete cell.

    Nodes are numbered row-major over the present ones; with ``periodic`` the
    last column connects back to the first.  Returns
    ``(vertex_index_map, triangles)``.
    """
    present = np.asarray(present, bool)
    idx = np.full(present.shape, -1)
    idx[present] = np.arange(int(present.sum()))
    if periodic:
        idx = np.concatenate([idx, idx[:, :1]], axis=1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    ok = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
    i, j = np.nonzero(ok)
    quads = np.column_stack([a[i, j], b[i, j], c[i, j], d[i, j]])
    tris = np.empty((2 * len(quads), 3), dtype=int)
    tris[0::2] = quads[:, [0, 1, 2]]
    tris[1::2] = quads[:, [0, 2, 3]]
    return idx[:, :present.shape[1]], tris


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    return v


def _dump(v, indent=0):
    pad = "  " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(x, indent + 1)}' for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, list):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list)) for x in v):
            return "[" + ", ".join(_dump(x) for x in v) + "]"
        return "[\n" + ",\n".join(pad + "  " + _dump(x, indent + 1) for x in v) + "\n" + pad + "]"
    if isinstance(v, float):
        s = fmt(v)
        return s if any(ch in s for ch in ".e") else s + ".0"
    return json.dumps(v)


def write_json(path, obj):
    """Pretty JSON in insertion order with 17-digit floats."""
    path = Path(path)
    path.write_text(_dump(_plain(obj)) + "\n", encoding="utf-8", newline="\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from e


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from e
