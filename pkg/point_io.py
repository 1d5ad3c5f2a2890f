"""Point-sample files — CSV rows plus a JSON sidecar describing the window.

Format:
    sample_00000.csv   header x0,...,x{d-1}[,mark], one point per row,
                       17 significant digits so floats round-trip exactly
    sample_00000.json  {"dim": d, "side": L, "boundary": "periodic", "marked": bool}
"""

import json
import logging
from pathlib import Path

import numpy as np

from geometry import Configuration, MarkedPoint, Window

logger = logging.getLogger("PointIO")

FLOAT_FORMAT = "%.17g"


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def csv_header(dim, marked):
    columns = [f"x{i}" for i in range(dim)]
    if marked:
        columns.append("mark")
    return ",".join(columns)


def write_points(path, config):
    """Write a configuration as CSV + JSON sidecar. Returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    window = config.window

    marks = config.marks()
    marked = len(config) > 0 and not np.isnan(marks).any()
    rows = config.positions()
    if marked:
        rows = np.column_stack([rows, marks])

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(csv_header(window.dim, marked) + "\n")
        if len(rows):
            np.savetxt(f, rows, fmt=FLOAT_FORMAT, delimiter=",")

    meta = window.to_dict()
    meta["marked"] = bool(marked)
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_points(path, cell_size=None):
    """Read a CSV sample (and its sidecar) back into a Configuration."""
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(f"Sample file not found: {path}")
    if not meta_path.exists():
        raise FileNotFoundError(f"Sample sidecar not found: {meta_path}")

    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    window = Window.from_dict(meta)

    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        body = f.read()

    columns = header.split(",")
    expected = [f"x{i}" for i in range(window.dim)]
    if columns[:window.dim] != expected:
        raise ValueError(f"Unexpected CSV header in {path}: {header!r}")
    marked = len(columns) == window.dim + 1 and columns[-1] == "mark"

    config = Configuration(window, cell_size=cell_size)
    if not body.strip():
        return config

    data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    if data.shape[1] != len(columns):
        raise ValueError(f"Row width {data.shape[1]} does not match header {header!r} in {path}")
    for row in data:
        pos = tuple(float(c) for c in row[:window.dim])
        mark = float(row[window.dim]) if marked else None
        config.insert(MarkedPoint(pos, mark))

    logger.debug(f"Read {len(config)} points from {path}")
    return config
