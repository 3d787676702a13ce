"""Plain-text file formats.

Curve matrices are CSV files whose first row holds a kind tag followed by the
``p`` grid abscissae; every further row holds a row label and ``p`` values::

    density,0.005,0.015,...
    0,0.93,1.02,...

Kinds are ``density`` (rows are densities), ``clr`` (rows are clr curves) and
``matrix`` (any ``m x p`` array on the grid, e.g. a covariance). Floats are
written with ``repr`` and therefore reload bit-identically.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .bayes import ClrCurve, DensityCurve, Grid, clr_array, inv_clr_array
from .errors import ArgumentError, ShapeError
from .mahalanobis import DistanceReport

CURVE_KINDS = ("density", "clr", "matrix")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")


def format_matrix(grid: Grid, rows, kind: str = "matrix") -> str:
    """CSV text for an ``m x p`` array on ``grid``."""
    if kind not in CURVE_KINDS:
        raise ArgumentError(f"kind must be one of {CURVE_KINDS}, got {kind!r}")
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != grid.p:
        raise ShapeError(f"rows have {rows.shape[1]} columns, grid has {grid.p} points")
    lines = [",".join([kind] + [_fmt(t) for t in grid.points])]
    for i, row in enumerate(rows):
        lines.append(",".join([str(i)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> tuple[str, Grid, np.ndarray]:
    """Inverse of :func:`format_matrix`; returns ``(kind, grid, rows)``."""
    table = [r for r in csv.reader(io.StringIO(text)) if r]
    if not table:
        raise ShapeError("empty curve file")
    kind = table[0][0].strip()
    if kind not in CURVE_KINDS:
        raise ShapeError(f"first header cell must be one of {CURVE_KINDS}, got {kind!r}")
    try:
        points = [float(v) for v in table[0][1:]]
        rows = [[float(v) for v in r[1:]] for r in table[1:]]
    except ValueError as exc:
        raise ShapeError(f"non-numeric cell in curve file: {exc}") from None
    grid = Grid.from_points(points)
    for j, r in enumerate(rows):
        if len(r) != grid.p:
            raise ShapeError(f"row {j} has {len(r)} values, header has {grid.p} abscissae")
    return kind, grid, np.array(rows, dtype=float).reshape(len(rows), grid.p)


def write_curves(path, curves) -> None:
    """Write a list of DensityCurve or ClrCurve (all of one kind)."""
    curves = list(curves)
    if not curves:
        raise ArgumentError("no curves to write")
    kind = "density" if isinstance(curves[0], DensityCurve) else "clr"
    expected = DensityCurve if kind == "density" else ClrCurve
    if not all(isinstance(f, expected) for f in curves):
        raise ArgumentError("curves must all be densities or all clr curves")
    write_text(path, format_matrix(curves[0].grid, np.stack([f.values for f in curves]), kind))


def curves_from_matrix(kind: str, grid: Grid, rows: np.ndarray) -> list[DensityCurve]:
    """Densities from a parsed curve file.

    Density rows are renormalized to unit integral (files written by other
    tools are rarely exactly normalized on our quadrature); clr rows are
    mapped back through the inverse clr.
    """
    if kind == "density":
        return [DensityCurve.normalized(grid, r) for r in rows]
    if kind == "clr":
        return [DensityCurve(grid, r) for r in inv_clr_array(grid, rows)]
    raise ShapeError("a curve file must hold densities or clr curves, not a plain matrix")


def read_curves(path) -> list[DensityCurve]:
    kind, grid, rows = parse_matrix(Path(path).read_text(encoding="utf-8"))
    return curves_from_matrix(kind, grid, rows)


def read_clr(path) -> tuple[Grid, np.ndarray]:
    """clr matrix of a curve file without building curve objects."""
    kind, grid, rows = parse_matrix(Path(path).read_text(encoding="utf-8"))
    if kind == "density":
        return grid, clr_array(grid, rows / grid.integrate(rows)[:, None])
    if kind == "clr":
        return grid, rows - (grid.integrate(rows) / grid.length)[:, None]
    raise ShapeError("a curve file must hold densities or clr curves, not a plain matrix")


def write_matrix(path, grid: Grid, rows) -> None:
    write_text(path, format_matrix(grid, rows, "matrix"))


def read_matrix(path) -> tuple[Grid, np.ndarray]:
    _, grid, rows = parse_matrix(Path(path).read_text(encoding="utf-8"))
    return grid, rows


def write_labels(path, labels) -> None:
    lines = ["index,outlier"] + [f"{i},{int(bool(v))}" for i, v in enumerate(labels)]
    write_text(path, "\n".join(lines) + "\n")


def read_labels(path) -> np.ndarray:
    table = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    if not table or [c.strip() for c in table[0][:2]] != ["index", "outlier"]:
        raise ShapeError("labels file must start with the header 'index,outlier'")
    try:
        return np.array([bool(int(r[1])) for r in table[1:] if r], dtype=bool)
    except (ValueError, IndexError) as exc:
        raise ShapeError(f"bad labels row: {exc}") from None


def write_distances(path, report: DistanceReport) -> None:
    write_text(path, report.to_csv())


def read_distances(path) -> DistanceReport:
    return DistanceReport.from_csv(Path(path).read_text(encoding="utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    write_text(path, dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
