"""CSV and JSON readers/writers for trajectories, reports and closed-loop series.

Floats are written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .systems import TrajectoryDataset


def _fmt(v):
    return repr(float(v))


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidArgumentError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid JSON ({exc})") from None


def _write_rows(path, header, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M = np.column_stack(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in M:
            w.writerow([_fmt(v) for v in row])


def _read_rows(path):
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise InvalidArgumentError(f"no such file: {path}") from None
    if not rows:
        raise InvalidArgumentError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: non-numeric entry ({exc})") from None
    return header, data.reshape(-1, len(header))


def write_trajectory_csv(path, ds):
    """Header ``t,x1..xn[,dx1..dxn][,u1..uq]``."""
    header = ["t"] + [f"x{i + 1}" for i in range(ds.n)]
    cols = [ds.times, ds.states]
    if ds.derivatives is not None:
        header += [f"dx{i + 1}" for i in range(ds.n)]
        cols.append(ds.derivatives)
    if ds.inputs is not None:
        header += [f"u{i + 1}" for i in range(ds.q)]
        cols.append(ds.inputs)
    _write_rows(path, header, cols)


def _indexed(header, prefix):
    pat = re.compile(rf"^{prefix}(\d+)$")
    found = sorted((int(m.group(1)), j) for j, h in enumerate(header) if (m := pat.match(h)))
    if [k for k, _ in found] != list(range(1, len(found) + 1)):
        raise InvalidArgumentError(f"columns {prefix}1..{prefix}k must be contiguous")
    return [j for _, j in found]


def read_trajectory_csv(path, derivative_scheme="given"):
    header, M = _read_rows(path)
    if not header or header[0] != "t":
        raise InvalidArgumentError(f"{path}: first column must be 't'")
    xi, di, ui = _indexed(header, "x"), _indexed(header, "dx"), _indexed(header, "u")
    if not xi:
        raise InvalidArgumentError(f"{path}: no state columns x1..xn")
    if di and len(di) != len(xi):
        raise InvalidArgumentError(f"{path}: derivative columns must match state columns")
    return TrajectoryDataset(
        M[:, 0],
        M[:, xi],
        M[:, di] if di else None,
        M[:, ui] if ui else None,
        derivative_scheme=derivative_scheme if di else None,
    )


def write_singular_values_csv(path, s):
    s = np.asarray(s, dtype=float)
    _write_rows(path, ["k", "sigma_k"], [np.arange(1, s.size + 1), s])


def read_singular_values_csv(path):
    header, M = _read_rows(path)
    if header != ["k", "sigma_k"]:
        raise InvalidArgumentError(f"{path}: expected columns k,sigma_k")
    return M[:, 1]


def write_closed_loop_csv(path, result):
    """Header ``t,x1..xn,u1..uq,C1..Cd,cost``."""
    n, q, d = result.states.shape[1], result.inputs.shape[1], result.coordinates.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(q)]
              + [f"C{i + 1}" for i in range(d)] + ["cost"])
    _write_rows(path, header, [result.times, result.states, result.inputs, result.coordinates, result.cost])


def read_closed_loop_csv(path):
    """Returns a dict of arrays keyed t, x, u, C, cost."""
    header, M = _read_rows(path)
    if not header or header[0] != "t" or header[-1] != "cost":
        raise InvalidArgumentError(f"{path}: not a closed-loop CSV")
    return {
        "t": M[:, 0],
        "x": M[:, _indexed(header, "x")],
        "u": M[:, _indexed(header, "u")],
        "C": M[:, _indexed(header, "C")],
        "cost": M[:, -1],
    }
