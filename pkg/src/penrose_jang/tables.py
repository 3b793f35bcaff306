"""Columnar profile tables with a small key-value header.

Layout::

    # key = value          (zero or more, values JSON-encoded)
    # columns: r a a1 ...
    <one whitespace separated row per node, %.17g>

Writing with 17 significant digits makes a write/read cycle bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

COLUMNS_TAG = "columns:"


def write_table(path, columns, header=None):
    path = Path(path)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = []
    for key, value in (header or {}).items():
        lines.append(f"{key} = {json.dumps(value, sort_keys=True)}")
    lines.append(COLUMNS_TAG + " " + " ".join(names))
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt="%.17g", header="\n".join(lines), comments="# ")
    return path


def read_table(path):
    """Return ``(header, columns)``; columns map name -> float array."""
    header, names = {}, None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith(COLUMNS_TAG):
                names = body[len(COLUMNS_TAG):].split()
            elif " = " in body:
                key, raw = body.split(" = ", 1)
                try:
                    header[key.strip()] = json.loads(raw)
                except json.JSONDecodeError:
                    header[key.strip()] = raw.strip()
    if names is None:
        raise ValueError(f"{path}: missing '# columns:' header line")
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: {data.shape[1]} columns but header names {len(names)}")
    return header, {n: data[:, i].copy() for i, n in enumerate(names)}


def write_series(path, x, y, xname, yname):
    """Plot-ready two-column file."""
    return write_table(path, {xname: x, yname: y})
