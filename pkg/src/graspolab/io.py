"""CSV round-trips for datasets, fitted models, and training logs.

All writers emit an optional leading ``# key=value ...`` comment line, then a
header row.  Floats are written with ``repr`` so files round-trip exactly and
re-runs are byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .mapping import AxisLine, MappingMatrix, ObservationSet


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_rows(path, header, rows, comment=None):
    lines = []
    if comment:
        lines.append("# " + comment)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_rows(path, expected_header):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if header != list(expected_header):
                raise DataError(
                    f"{path}:{lineno}: header {header} != expected {list(expected_header)}"
                )
            continue
        rows.append((lineno, line.split(",")))
    if header is None:
        raise DataError(f"{path}: no header row found")
    return rows


def _parse_floats(path, lineno, fields, count):
    if len(fields) != count:
        raise DataError(f"{path}:{lineno}: expected {count} fields, got {len(fields)}")
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not all(math.isfinite(v) for v in values):
        raise DataError(f"{path}:{lineno}: non-finite value")
    return values


OBSERVATION_HEADER = ("ix", "iy", "iz", "rx", "ry", "rz")


def write_observations(path, obs: ObservationSet, comment=None):
    rows = [
        (obs.image[0, i], obs.image[1, i], obs.image[2, i],
         obs.robot[0, i], obs.robot[1, i], obs.robot[2, i])
        for i in range(obs.n)
    ]
    _write_rows(path, OBSERVATION_HEADER, rows, comment)


def read_observations(path) -> ObservationSet:
    rows = _read_rows(path, OBSERVATION_HEADER)
    if not rows:
        raise DataError(f"{path}: dataset has no observation rows")
    values = [_parse_floats(path, lineno, fields, 6) for lineno, fields in rows]
    arr = np.array(values).T
    return ObservationSet(arr[:3], arr[3:])


MATRIX_HEADER = ("m1", "m2", "m3")


def write_matrix(path, matrix: MappingMatrix, comment=None):
    _write_rows(path, MATRIX_HEADER, [tuple(row) for row in matrix.m], comment)


def read_matrix(path) -> MappingMatrix:
    rows = _read_rows(path, MATRIX_HEADER)
    if len(rows) != 3:
        raise DataError(f"{path}: expected 3 matrix rows, got {len(rows)}")
    values = [_parse_floats(path, lineno, fields, 3) for lineno, fields in rows]
    return MappingMatrix(np.array(values))


AXIS_LINE_HEADER = ("axis", "slope", "intercept")


def write_axis_lines(path, lines, comment=None):
    rows = [(name, line.slope, line.intercept) for name, line in zip("xyz", lines)]
    _write_rows(path, AXIS_LINE_HEADER, rows, comment)


def read_axis_lines(path):
    rows = _read_rows(path, AXIS_LINE_HEADER)
    if len(rows) != 3 or [fields[0] for _, fields in rows] != ["x", "y", "z"]:
        raise DataError(f"{path}: expected axis rows x, y, z")
    out = []
    for lineno, fields in rows:
        slope, intercept = _parse_floats(path, lineno, fields[1:], 2)
        out.append(AxisLine(slope, intercept))
    return tuple(out)


EPISODE_HEADER = ("episode", "action", "reward", "epsilon", "score", "loss")


def write_episode_log(path, records, comment=None):
    rows = [
        (r.episode, r.action, r.reward, r.epsilon, r.score,
         "nan" if math.isnan(r.loss) else _fmt(r.loss))
        for r in records
    ]
    _write_rows(path, EPISODE_HEADER, rows, comment)


def write_table(path, header, rows, comment=None):
    """Generic small result table."""
    _write_rows(path, tuple(header), rows, comment)
