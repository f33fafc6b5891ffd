"""Artifact writers: solution CSV, JSON reports and SVG heatmaps."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

CSV_HEADER = ["x", "y", "d", "u", "residual"]


def _row_major(grid) -> np.ndarray:
    return np.lexsort((grid.ij[:, 0], grid.ij[:, 1]))


def write_solution_csv(path, grid, u, residual, points=None, d=None) -> None:
    """Interior nodes in row-major lattice order, 17 significant digits.

    ``points`` and ``d`` override the grid's coordinates (used when a solution
    computed on a rescaled domain is written in original units).
    """
    order = _row_major(grid)
    pts = grid.points if points is None else np.asarray(points, float)
    dist = grid.d if d is None else np.asarray(d, float)
    cols = np.column_stack([pts[:, 0], pts[:, 1], dist, u, residual])[order]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for row in cols:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_solution_csv(path) -> dict:
    """Columns of a solution CSV as float arrays; malformed files raise ConfigError."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise ConfigError(f"{path}: expected header {','.join(CSV_HEADER)}")
    body = rows[1:]
    if not body:
        raise ConfigError(f"{path}: no data rows")
    for k, row in enumerate(body, start=2):
        if len(row) != len(CSV_HEADER):
            raise ConfigError(f"{path}:{k}: expected {len(CSV_HEADER)} fields, got {len(row)}")
    try:
        data = np.array(body, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    if not np.all(np.isfinite(data[:, :4])):
        raise ConfigError(f"{path}: non-finite coordinates, distances or values")
    return {name: data[:, i] for i, name in enumerate(CSV_HEADER)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isfinite(x):
            return float(f"{x:.15g}")
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, floats rounded to 15 significant digits."""
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


_ANCHORS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)


def _color(t: np.ndarray) -> list[str]:
    t = np.clip(np.nan_to_num(t, nan=0.0), 0.0, 1.0) * (len(_ANCHORS) - 1)
    k = np.minimum(t.astype(int), len(_ANCHORS) - 2)
    f = (t - k)[:, None]
    rgb = (1 - f) * _ANCHORS[k] + f * _ANCHORS[k + 1]
    return ["#%02x%02x%02x" % tuple(int(round(c)) for c in row) for row in rgb]


def write_heatmap_svg(path, x, y, values, h: float, title: str = "", log: bool = False,
                      size: int = 480) -> None:
    """One square per node, colour scaled between the 1st and 99th percentiles."""
    x, y, v = (np.asarray(a, float) for a in (x, y, values))
    if log:
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.log10(np.where(v > 0, v, np.nan))
    lo, hi = np.nanpercentile(v, [1, 99]) if np.isfinite(v).any() else (0.0, 1.0)
    t = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    x0, x1, y0, y1 = x.min() - h / 2, x.max() + h / 2, y.min() - h / 2, y.max() + h / 2
    s = size / max(x1 - x0, y1 - y0)
    w, ht = (x1 - x0) * s, (y1 - y0) * s
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{ht + 24:.0f}" '
           f'viewBox="0 0 {w:.2f} {ht + 24:.2f}">',
           f'<text x="4" y="16" font-family="sans-serif" font-size="12">{title} '
           f'[{lo:.4g}, {hi:.4g}]{" (log10)" if log else ""}</text>']
    for xi, yi, col in zip(x, y, _color(t)):
        out.append(f'<rect x="{(xi - h / 2 - x0) * s:.2f}" y="{(y1 - yi - h / 2) * s + 24:.2f}" '
                   f'width="{h * s + 0.01:.2f}" height="{h * s + 0.01:.2f}" fill="{col}"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
