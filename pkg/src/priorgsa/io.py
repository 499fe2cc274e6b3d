"""
Plain-text persistence: CSV tables with a ``#`` metadata header, JSON documents.

Numbers are written with 17 significant digits so values round-trip exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (str, bytes)):
        return x if isinstance(x, str) else x.decode()
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path, columns, rows, meta=None) -> Path:
    """Write ``rows`` under a ``#key=value`` metadata header and a column line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        for key, val in (meta or {}).items():
            f.write(f"# {key}={json.dumps(val, default=_json_default)}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)``; numeric cells are converted to float."""
    meta = {}
    rows = []
    columns = None
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    try:
                        meta[k.strip()] = json.loads(v)
                    except json.JSONDecodeError:
                        meta[k.strip()] = v
                continue
            cells = line.split(",")
            if columns is None:
                columns = cells
                continue
            rows.append([_num(c) for c in cells])
    return meta, columns or [], rows


def read_numeric_csv(path):
    meta, columns, rows = read_csv(path)
    return meta, columns, np.array(rows, dtype=float).reshape(len(rows), len(columns))


def _num(c):
    try:
        return float(c)
    except ValueError:
        return c


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
