"""Wave-like contour modulation.

Three stages act on a B-spline contour:

1. :func:`reparam_for_frequency` refits the curve onto a knot vector whose
   knot points sit at equal arc-length steps (four per wave period).
2. :func:`make_shape` builds the sinusoidal, sawtooth or rectangular profile
   by displacing selected knot points along the curve normal.
3. :func:`clamp_amplitude` shortens individual displacements so that a
   moved point never crosses the skeleton between its own curve and the
   nearest foreign curve point, found through a :class:`DistanceField`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import spline as S
from .dci import BSplineCurve, SHAPES, polygon_signed_area

DEFAULT_EPSILON = 3.0
CLAMP_DEPTH = 8
PAIR_OFFSET = 0.01


class SkipCurve(Exception):
    """The curve cannot carry the requested wave; leave it unmodified."""


@dataclass(frozen=True)
class WaveSpec:
    shape: str
    period_length: float
    amplitude: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not self.period_length > 0:
            raise ValueError("period_length must be positive")
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be non-negative")


# ----------------------------------------------------------- distance field

class DistanceField:
    """Nearest-sample lookup over densely sampled curves.

    The grid covers the canvas plus ``pad`` units on every side at one cell
    per canvas unit. ``dist`` holds the Euclidean distance (in cells) from
    each cell centre to the nearest seeded cell; :meth:`nearest` refines a
    query to the exact nearest curve sample.
    """

    def __init__(self, points, curve_ids, params, width, height, pad=32):
        self.points = np.asarray(points, dtype=np.float64)
        self.curve_ids = np.asarray(curve_ids)
        self.params = np.asarray(params, dtype=np.float64)
        self.pad = int(pad)
        self.origin = np.array([-self.pad, -self.pad], dtype=np.float64)
        W = int(math.ceil(width)) + 2 * self.pad + 1
        H = int(math.ceil(height)) + 2 * self.pad + 1
        self.shape = (H, W)
        cell = self._cell(self.points)
        inside = (cell[:, 0] >= 0) & (cell[:, 0] < W) & (cell[:, 1] >= 0) & (cell[:, 1] < H)
        flat = np.where(inside, cell[:, 1] * W + cell[:, 0], -1)
        seeds = np.zeros(H * W, dtype=np.uint8)
        seeds[flat[inside]] = 1
        d2, feat = kernels.edt_features(seeds.reshape(H, W))
        self.dist = np.sqrt(d2)
        self.feature = feat
        # samples grouped by their cell, for exact refinement
        order = np.argsort(flat, kind="stable")
        self._sorted_cells = flat[order]
        self._order = order

    def _cell(self, p):
        return np.floor(np.asarray(p) - self.origin + 0.5).astype(np.int64)

    def _samples_in(self, cells):
        lo = np.searchsorted(self._sorted_cells, cells, side="left")
        hi = np.searchsorted(self._sorted_cells, cells, side="right")
        idx = [self._order[a:b] for a, b in zip(lo, hi)]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)

    def value(self, p):
        """Distance from ``p`` to the nearest curve sample."""
        return float(np.linalg.norm(self.points[self.nearest(p)] - np.asarray(p, dtype=float)))

    def nearest(self, p):
        """Index of the curve sample nearest to point ``p``."""
        p = np.asarray(p, dtype=np.float64)
        H, W = self.shape
        c = self._cell(p)
        cx, cy = int(np.clip(c[0], 0, W - 1)), int(np.clip(c[1], 0, H - 1))
        ys, xs = np.mgrid[max(cy - 1, 0):min(cy + 2, H), max(cx - 1, 0):min(cx + 2, W)]
        feats = self.feature[ys.ravel(), xs.ravel()]
        feats = np.unique(feats[feats >= 0])
        if feats.size == 0:
            return int(np.argmin(np.linalg.norm(self.points - p, axis=1)))
        # seed cells within the 3x3 features' reach, plus their neighbours
        fy, fx = np.divmod(feats, W)
        ny, nx = np.mgrid[-1:2, -1:2]
        cy2 = np.clip((fy[:, None] + ny.ravel()[None, :]).ravel(), 0, H - 1)
        cx2 = np.clip((fx[:, None] + nx.ravel()[None, :]).ravel(), 0, W - 1)
        cand = self._samples_in(np.unique(cy2 * W + cx2))
        d = np.linalg.norm(self.points[cand] - p, axis=1)
        return int(cand[np.argmin(d)])


def sample_curves(curves, step=0.25):
    pts, ids, us = [], [], []
    for i, c in enumerate(curves):
        if isinstance(c, BSplineCurve):
            lo, hi = c.domain
            L = S.arc_length_table(c, 16).total_length
            u = np.linspace(lo, hi, max(2, int(math.ceil(L / step)) + 1))
            p = S.evaluate(c, u)
        else:
            p, u = c.polyline(step)
        pts.append(p)
        ids.append(np.full(len(p), i))
        us.append(u)
    return np.concatenate(pts), np.concatenate(ids), np.concatenate(us)


def distance_transform(curves, width, height, step=0.25, pad=32):
    """Distance field of the curve samples (at most ``step`` apart)."""
    if not curves:
        raise ValueError("no geometry")
    pts, ids, us = sample_curves(curves, step)
    return DistanceField(pts, ids, us, width, height, pad)


# ---------------------------------------------------------------- clamping

def skeleton_amplitude(K, n, N):
    """Distance along ``n`` from ``K`` to the point equidistant to ``K`` and ``N``."""
    d = np.asarray(N, dtype=float) - np.asarray(K, dtype=float)
    return 0.5 * float(d @ d) / float(np.dot(n, d))


def clamp_amplitude(K, n, a, field, epsilon=DEFAULT_EPSILON, depth=CLAMP_DEPTH):
    """Largest admissible displacement of ``K`` along unit normal ``n``.

    While the displaced point is nearer to some curve sample ``N`` than to
    ``K``, the amplitude is cut to the skeleton distance minus ``epsilon``.
    The check repeats on the new point up to ``depth`` times.
    """
    K = np.asarray(K, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    a = float(a)
    for _ in range(depth):
        if a <= 0:
            return 0.0
        P = K + a * n
        N = field.points[field.nearest(P)]
        d = N - K
        along = float(n @ d)
        if along <= 0 or np.linalg.norm(P - N) >= np.linalg.norm(P - K) - 1e-9:
            return a
        a = min(a, skeleton_amplitude(K, n, N) - epsilon)
    return max(a, 0.0)


# ---------------------------------------------------------- reparametrise

def _periods(length, period):
    n = int(math.floor(length / period + 1e-9))
    if n < 2:
        raise SkipCurve(f"curve length {length:.3g} holds fewer than two periods of {period:.3g}")
    return n


def _corner_params(curve):
    lo, hi = curve.domain
    vals, counts = np.unique(curve.knots[(curve.knots > lo) & (curve.knots < hi)], return_counts=True)
    return vals[counts >= S.DEGREE]


def _span_counts(stretches, step):
    # an even number of spans per stretch, so every corner is a zero crossing
    return np.maximum(2, 2 * np.round(stretches / (2.0 * step))).astype(int)


def reparam_for_frequency(curve: BSplineCurve, wave: WaveSpec, tol=0.25,
                          energy_weight=1e-3, max_iter=200, spacing_tol=0.005):
    """Refit ``curve`` with knot points at equal arc-length steps.

    The number of whole periods is ``floor(length / period)``; the realised
    period absorbs the remainder. Each period receives four knot spans. The
    fit tolerance is tightened to ``spacing_tol`` times the knot spacing so
    the knot points land on their arc-length targets.

    Corners of the input (interior knots of full multiplicity) stay corners.
    Each stretch between corners gets the even span count closest to the
    global spacing, and the corner keeps its triple knot.
    """
    table = S.arc_length_table(curve)
    L = table.total_length
    n = _periods(L, wave.period_length)
    lo, hi = curve.domain
    corners = _corner_params(curve)
    if corners.size == 0:
        t = table.u_at_length(np.linspace(0.0, L, 4 * n + 1))
        t[0], t[-1] = lo, hi
        interior = t[1:-1]
    else:
        bounds = np.concatenate([[0.0], table.length_at(corners), [L]])
        spans = _span_counts(np.diff(bounds), L / (4 * n))
        parts = []
        for k, m in enumerate(spans):
            t = table.u_at_length(np.linspace(bounds[k], bounds[k + 1], m + 1))[1:-1]
            parts.append(t)
            if k < len(corners):
                parts.append([corners[k]] * S.DEGREE)
        interior = np.concatenate(parts)
    target = np.concatenate([[lo] * 4, interior, [hi] * 4])
    if len(target) < len(curve.knots):
        raise SkipCurve("curve too short for its own knot structure")
    fit_tol = min(tol, spacing_tol * L / (4 * n))
    res = S.elspia_fit(curve, target, energy_weight=energy_weight,
                       max_iter=max_iter, tol=fit_tol)
    return res.curve


def knot_point_params(curve):
    lo, hi = curve.domain
    return np.concatenate([[lo], np.unique(curve.knots[(curve.knots > lo) & (curve.knots < hi)]), [hi]])


# ------------------------------------------------------------------ shapes

def outward_sign(curve: BSplineCurve):
    """+1 when the +90 degree normal points outward (always for open curves)."""
    if not curve.closed:
        return 1.0
    lo, hi = curve.domain
    p = S.evaluate(curve, np.linspace(lo, hi, 400))
    return -1.0 if polygon_signed_area(p) > 0 else 1.0


def _normals(curve, u, orient):
    return orient * S.unit_normals(curve, u)


def _on_original(field, K, snap=1.0):
    # the refitted knot point is within the fit tolerance of the original
    # curve; measuring from the original sample keeps that gap from reading
    # as an obstruction
    N = field.points[field.nearest(K)]
    return N if np.linalg.norm(N - K) < snap else np.asarray(K, dtype=float)


def _clamp(field, K, n, a, epsilon):
    return clamp_amplitude(_on_original(field, K), n, a, field, epsilon)


def _clamped(points, normals, a, field, epsilon):
    if field is None:
        return np.full(len(points), float(a))
    return np.array([_clamp(field, K, nv, a, epsilon) for K, nv in zip(points, normals)])


def _solve_displacement(curve, params, offsets):
    B = S.basis_matrix(curve.knots, params)
    dD = S.solve_constraint_offsets(B, offsets)
    return curve.replace(de_boor=curve.de_boor + dD)


def apply_amplitude(curve: BSplineCurve, wave: WaveSpec, field=None, epsilon=DEFAULT_EPSILON):
    """Sinusoidal wave on a reparametrised curve.

    Every second knot point (the first a quarter period after the start) is a
    peak, displaced by the clamped amplitude along alternating normals.
    The curve end points are held in place; the knot points between peaks
    are left free. The de Boor update is the minimum-norm solution that
    interpolates the displaced points.
    """
    u = knot_point_params(curve)
    if wave.amplitude == 0:
        return curve
    orient = outward_sign(curve)
    peaks = u[1:-1:2]
    sign = np.where(np.arange(len(peaks)) % 2 == 0, 1.0, -1.0)
    K = S.evaluate(curve, peaks)
    n = _normals(curve, peaks, orient) * sign[:, None]
    a = _clamped(K, n, wave.amplitude, field, epsilon)
    params = np.concatenate([[u[0]], peaks, [u[-1]]])
    offsets = np.vstack([[0.0, 0.0], a[:, None] * n, [0.0, 0.0]])
    return _solve_displacement(curve, params, offsets)


def _polyline_spline(curve, corner_params):
    """Straight strips through the curve points at ``corner_params``."""
    Q = S.evaluate(curve, corner_params)
    m = len(Q) - 1
    D = np.empty((3 * m + 1, 2))
    D[0::3] = Q
    D[1::3] = Q[:-1] + (Q[1:] - Q[:-1]) / 3.0
    D[2::3] = Q[:-1] + 2.0 * (Q[1:] - Q[:-1]) / 3.0
    knots = np.concatenate([[corner_params[0]] * 4, np.repeat(corner_params[1:-1], 3),
                            [corner_params[-1]] * 4])
    return curve.replace(de_boor=D, knots=knots)


def _straighten(curve):
    D = np.array(curve.de_boor)
    Q = D[0::3]
    D[1::3] = Q[:-1] + (Q[1:] - Q[:-1]) / 3.0
    D[2::3] = Q[:-1] + 2.0 * (Q[1:] - Q[:-1]) / 3.0
    return curve.replace(de_boor=D)


def _sawtooth(curve, wave, field, epsilon):
    u = knot_point_params(curve)
    orient = outward_sign(curve)
    corners = u[1:-1:2]
    sign = np.where(np.arange(len(corners)) % 2 == 0, 1.0, -1.0)
    K = S.evaluate(curve, corners)
    n = _normals(curve, corners, orient) * sign[:, None]
    a = _clamped(K, n, wave.amplitude, field, epsilon)
    params = np.concatenate([[u[0]], corners, [u[-1]]])
    base = _polyline_spline(curve, params)
    offsets = np.vstack([[0.0, 0.0], a[:, None] * n, [0.0, 0.0]])
    return _straighten(_solve_displacement(base, params, offsets))


def _rectangular(curve, wave, field, epsilon):
    u = knot_point_params(curve)
    orient = outward_sign(curve)
    edges = u[0::2]             # plateau boundaries
    mids = u[1::2]              # plateau centres
    n_plateaus = len(mids)
    sign = np.where(np.arange(n_plateaus) % 2 == 0, 1.0, -1.0)

    # each interior edge becomes a pair (t, t + delta); the ends get one extra
    params, plateau_of = [edges[0]], [-1]
    for k in range(n_plateaus):
        lo, hi = edges[k], edges[k + 1]
        delta = PAIR_OFFSET * (hi - lo)
        params += [lo + delta, hi] if k < n_plateaus - 1 else [lo + delta, hi - delta]
        plateau_of += [k, k]
    params.append(edges[-1])
    plateau_of.append(-1)
    params = np.asarray(params)
    plateau_of = np.asarray(plateau_of)

    K = S.evaluate(curve, params)
    nrm = _normals(curve, params, orient)
    amp = np.full(n_plateaus, float(wave.amplitude))
    if field is not None:
        Km = S.evaluate(curve, mids)
        nm = _normals(curve, mids, orient) * sign[:, None]
        for k in range(n_plateaus):
            cand = [_clamp(field, Km[k], nm[k], wave.amplitude, epsilon)]
            for j in np.flatnonzero(plateau_of == k):
                cand.append(_clamp(field, K[j], nrm[j] * sign[k], wave.amplitude, epsilon))
            amp[k] = min(cand)
    offsets = np.zeros((len(params), 2))
    inner = plateau_of >= 0
    offsets[inner] = (amp[plateau_of[inner]] * sign[plateau_of[inner]])[:, None] * nrm[inner]
    base = _polyline_spline(curve, params)
    return _straighten(_solve_displacement(base, params, offsets))


def make_shape(curve: BSplineCurve, wave: WaveSpec, field=None, epsilon=DEFAULT_EPSILON):
    """Build the wave profile on a curve returned by :func:`reparam_for_frequency`.

    * sinusoidal: smooth wave, peaks at every second knot point;
    * sawtooth: corners at the same points with alternating sides, joined
      by straight strips (triple knots, inner control points on the lines);
    * rectangular: plateaus between every second knot point; each plateau
      boundary is a pair of knots a small parametric offset apart, displaced
      to opposite sides.
    """
    if wave.shape == "sinusoidal":
        return apply_amplitude(curve, wave, field, epsilon)
    if wave.shape == "sawtooth":
        return _sawtooth(curve, wave, field, epsilon)
    return _rectangular(curve, wave, field, epsilon)


def modulate_curve(curve: BSplineCurve, wave: WaveSpec, field=None, epsilon=DEFAULT_EPSILON, **fit):
    """Reparametrise and shape one curve; raises :class:`SkipCurve`."""
    return make_shape(reparam_for_frequency(curve, wave, **fit), wave, field, epsilon)
