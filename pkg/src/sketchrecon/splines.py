"""Least-squares clamped cubic B-spline fitting and Bezier utilities.

Fits use chord-length parameterization and pin the first and last
control points to the data endpoints, so fitted curves interpolate
their endpoints exactly (interior controls solved in least squares).
Four-control-point curves are cubic Beziers and get closed-form
evaluation, derivatives and de Casteljau splitting.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import BSpline

from .core.geometry import cumulative_lengths
from .errors import DegenerateInput

DEGREE = 3


def chord_parameters(points: np.ndarray) -> np.ndarray:
    """Normalized cumulative chord length in [0, 1]."""
    cum = cumulative_lengths(points)
    total = cum[-1]
    if total == 0.0:
        raise DegenerateInput("all points coincide")
    return cum / total


def clamped_uniform_knots(n_ctrl: int) -> np.ndarray:
    if n_ctrl < DEGREE + 1:
        raise DegenerateInput("need at least 4 control points for a cubic")
    interior = np.linspace(0.0, 1.0, n_ctrl - DEGREE + 1)[1:-1]
    return np.concatenate([np.zeros(DEGREE + 1), interior, np.ones(DEGREE + 1)])


def fit_clamped_bspline(points: np.ndarray, n_ctrl: int) -> BSpline:
    """Least-squares clamped cubic fit with endpoint interpolation.

    Rank-deficient systems (few or degenerate points) fall back to the
    minimum-norm solution, so the fit never fails for distinct endpoints.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        raise DegenerateInput("need at least 2 points to fit")
    params = chord_parameters(pts)
    knots = clamped_uniform_knots(n_ctrl)
    design = BSpline.design_matrix(params, knots, DEGREE).toarray()
    first, last = pts[0], pts[-1]
    if n_ctrl == 4 and pts.shape[0] == 2:
        coeffs = np.array([first, first + (last - first) / 3.0,
                           first + 2.0 * (last - first) / 3.0, last])
        return BSpline(knots, coeffs, DEGREE)
    rhs = pts - np.outer(design[:, 0], first) - np.outer(design[:, -1], last)
    interior, *_ = np.linalg.lstsq(design[:, 1:-1], rhs, rcond=None)
    coeffs = np.vstack([first, interior, last])
    return BSpline(knots, coeffs, DEGREE)


def spline_points(spline: BSpline, params: np.ndarray) -> np.ndarray:
    return np.asarray(spline(params), dtype=np.float64)


def spline_tangents(spline: BSpline, params: np.ndarray) -> np.ndarray:
    """Unit tangents from the spline derivative (zero vectors fall back
    to the chord direction)."""
    d = np.atleast_2d(np.asarray(spline.derivative()(params), dtype=np.float64))
    norms = np.linalg.norm(d, axis=1)
    bad = norms < 1e-12
    if np.any(bad):
        ends = spline([0.0, 1.0])
        chord = ends[1] - ends[0]
        cn = np.linalg.norm(chord)
        fallback = chord / cn if cn > 0 else np.array([1.0, 0.0, 0.0])
        d[bad] = fallback
        norms[bad] = 1.0
    return d / norms[:, None]


def resample_even(spline: BSpline, spacing: float, min_samples: int = 8,
                  dense: int = 256) -> np.ndarray:
    """Parameters of samples evenly spaced in arc length.

    Sample count is ceil(length / spacing) + 1, at least min_samples.
    """
    t = np.linspace(0.0, 1.0, dense)
    cum = cumulative_lengths(spline_points(spline, t))
    total = cum[-1]
    if total == 0.0:
        raise DegenerateInput("zero-length curve")
    n = max(min_samples, int(np.ceil(total / spacing)) + 1)
    targets = np.linspace(0.0, total, n)
    return np.interp(targets, cum, t)


# --- cubic Bezier helpers (4 control points) ---

def bezier_eval(cp: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
    s = 1.0 - t
    return (s ** 3 * cp[0] + 3 * s ** 2 * t * cp[1]
            + 3 * s * t ** 2 * cp[2] + t ** 3 * cp[3])


def bezier_derivative(cp: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
    s = 1.0 - t
    return 3.0 * (s ** 2 * (cp[1] - cp[0]) + 2 * s * t * (cp[2] - cp[1])
                  + t ** 2 * (cp[3] - cp[2]))


def bezier_tangent(cp: np.ndarray, t: float) -> np.ndarray:
    d = bezier_derivative(cp, np.array([t]))[0]
    n = np.linalg.norm(d)
    if n < 1e-12:
        chord = cp[3] - cp[0]
        cn = np.linalg.norm(chord)
        return chord / cn if cn > 0 else np.array([1.0, 0.0, 0.0])
    return d / n


def bezier_split(cp: np.ndarray, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact de Casteljau subdivision at parameter u."""
    p01 = (1 - u) * cp[0] + u * cp[1]
    p12 = (1 - u) * cp[1] + u * cp[2]
    p23 = (1 - u) * cp[2] + u * cp[3]
    p012 = (1 - u) * p01 + u * p12
    p123 = (1 - u) * p12 + u * p23
    mid = (1 - u) * p012 + u * p123
    left = np.array([cp[0], p01, p012, mid])
    right = np.array([mid, p123, p23, cp[3]])
    return left, right


def bezier_length(cp: np.ndarray, dense: int = 128) -> float:
    pts = bezier_eval(cp, np.linspace(0.0, 1.0, dense))
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def fit_cubic_bezier(points: np.ndarray) -> np.ndarray:
    """Four-control-point clamped cubic through the endpoints (LSQ interior)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 4:
        a, b = pts[0], pts[-1]
        return np.array([a, a + (b - a) / 3.0, a + 2 * (b - a) / 3.0, b])
    return np.asarray(fit_clamped_bspline(pts, 4).c, dtype=np.float64)
