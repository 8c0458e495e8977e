"""Small polyline helpers shared by planners and trajectory generation."""

from __future__ import annotations

import numpy as np


def dedupe_polyline(points, eps: float = 1e-12) -> np.ndarray:
    """Drop consecutive duplicates (zero-length segments)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return pts
    seg = np.hypot(*(pts[1:] - pts[:-1]).T)
    keep = np.concatenate([[True], seg > eps])
    return pts[keep]


def cum_arclength(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0)
    seg = np.hypot(*(pts[1:] - pts[:-1]).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def polyline_length(points) -> float:
    s = cum_arclength(points)
    return float(s[-1]) if len(s) else 0.0


def interp_along(points, s_values) -> np.ndarray:
    """Positions at the given arc lengths (clamped to the polyline's range)."""
    pts = dedupe_polyline(points)
    if len(pts) == 1:
        return np.tile(pts[0], (len(np.atleast_1d(s_values)), 1))
    s = cum_arclength(pts)
    sv = np.clip(np.atleast_1d(s_values), 0.0, s[-1])
    return np.column_stack([np.interp(sv, s, pts[:, 0]), np.interp(sv, s, pts[:, 1])])


def resample_polyline(points, spacing: float) -> np.ndarray:
    """Uniform arc-length resampling with n = max(1, round(L/spacing)) steps.

    Keeps both endpoints exactly; interior spacing is L/n.
    """
    pts = dedupe_polyline(points)
    if len(pts) < 2:
        return pts.copy()
    L = polyline_length(pts)
    n = max(1, int(round(L / spacing)))
    out = interp_along(pts, np.linspace(0.0, L, n + 1))
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out
