"""Cubic B-spline numerics.

Evaluation (with analytic derivatives), Bezier <-> B-spline conversion,
Boehm knot insertion, arc-length tables, the ELSPIA fit onto a prescribed
knot vector and the minimum-norm constraint solve used to displace knot
points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .dci import BezierCurve, BSplineCurve, ColorPoint

DEGREE = 3
DEFAULT_ALPHA = 3.5
ARC_SAMPLES = 64


class SplineDomainError(ValueError):
    """Parameter outside the knot domain."""


class DegenerateJointError(ValueError):
    def __init__(self, segment):
        self.segment = segment
        super().__init__(f"zero-length tangent at the joint after segment {segment}")


class KnotMultiplicityError(ValueError):
    """Knot insertion would raise a multiplicity above the degree."""


class ConstraintSolveError(RuntimeError):
    """The constrained offset system could not be satisfied."""


# ------------------------------------------------------------------ basis

def find_spans(knots, u, p=DEGREE, side="right"):
    """Index ``i`` of the non-empty span holding each ``u``.

    ``side="right"`` gives ``t_i <= u < t_{i+1}`` (right-continuous),
    ``side="left"`` gives ``t_i < u <= t_{i+1}``. Values at the domain ends
    are clamped into the first/last non-empty span.
    """
    knots = np.asarray(knots)
    n = len(knots) - p - 1
    idx = np.searchsorted(knots, u, side="right" if side == "right" else "left") - 1
    return np.clip(idx, p, n - 1)


def _nonzero_basis(knots, spans, u, p):
    m = len(u)
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], den, out=np.zeros(m), where=den != 0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _derivative_control(ctrl, knots, p):
    # control polygon of the derivative curve (degree p - 1, knots[1:-1])
    den = knots[p + 1:p + len(ctrl)] - knots[1:len(ctrl)]
    diff = ctrl[1:] - ctrl[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = p * diff / den[:, None]
    q[den == 0] = 0.0
    return q, knots[1:-1]


def _check_domain(knots, u):
    lo, hi = knots[DEGREE], knots[-DEGREE - 1]
    tol = 1e-12 * max(1.0, abs(hi - lo))
    if np.any(u < lo - tol) or np.any(u > hi + tol):
        bad = u[(u < lo - tol) | (u > hi + tol)][0]
        raise SplineDomainError(f"parameter {bad} outside domain [{lo}, {hi}]")
    return np.clip(u, lo, hi)


def evaluate(curve: BSplineCurve, u, der=0, side="right"):
    """Points (``der=0``) or exact ``der``-th derivatives at parameters ``u``.

    Returns an ``(m, 2)`` array for array input and a length-2 array for
    scalar input.
    """
    scalar = np.ndim(u) == 0
    u = _check_domain(curve.knots, np.atleast_1d(np.asarray(u, dtype=np.float64)))
    ctrl, knots, p = curve.de_boor, curve.knots, DEGREE
    for _ in range(der):
        ctrl, knots = _derivative_control(ctrl, knots, p)
        p -= 1
    if p < 0:
        out = np.zeros((len(u), 2))
    else:
        spans = find_spans(knots, u, p, side)
        N = _nonzero_basis(knots, spans, u, p)
        out = np.zeros((len(u), 2))
        for r in range(p + 1):
            out += N[:, r:r + 1] * ctrl[spans - p + r]
    return out[0] if scalar else out


def basis_matrix(knots, params, side="right"):
    """Sparse matrix ``B`` with ``B[j, i] = N_i(params[j])`` (cubic)."""
    knots = np.asarray(knots, dtype=np.float64)
    u = _check_domain(knots, np.atleast_1d(np.asarray(params, dtype=np.float64)))
    n = len(knots) - DEGREE - 1
    spans = find_spans(knots, u, DEGREE, side)
    N = _nonzero_basis(knots, spans, u, DEGREE)
    rows = np.repeat(np.arange(len(u)), DEGREE + 1)
    cols = (spans[:, None] - DEGREE + np.arange(DEGREE + 1)[None, :]).ravel()
    return sp.csr_matrix((N.ravel(), (rows, cols)), shape=(len(u), n))


def distinct_interior_knots(knots):
    lo, hi = knots[DEGREE], knots[-DEGREE - 1]
    vals, counts = np.unique(knots[(knots > lo) & (knots < hi)], return_counts=True)
    return vals, counts


def multiplicity(knots, t):
    return int(np.sum(knots == t))


def unit_normals(curve: BSplineCurve, u, side="right"):
    """Tangent rotated by +90 degrees, normalised."""
    d = evaluate(curve, np.atleast_1d(u), der=1, side=side)
    n = np.stack([-d[:, 1], d[:, 0]], axis=1)
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(length > 0, length, 1.0)


# -------------------------------------------------------- knot insertion

def insert_knot(curve: BSplineCurve, t):
    """Boehm insertion of one knot; geometry is unchanged."""
    T, D = curve.knots, curve.de_boor
    lo, hi = curve.domain
    if not (lo < t < hi):
        raise SplineDomainError(f"knot {t} not strictly inside ({lo}, {hi})")
    s = multiplicity(T, t)
    if s + 1 > DEGREE:
        raise KnotMultiplicityError(f"knot {t} already has multiplicity {s}")
    k = int(np.searchsorted(T, t, side="right")) - 1
    p = DEGREE
    Q = np.empty((len(D) + 1, 2))
    Q[:k - p + 1] = D[:k - p + 1]
    for i in range(k - p + 1, k - s + 1):
        a = (t - T[i]) / (T[i + p] - T[i])
        Q[i] = a * D[i] + (1.0 - a) * D[i - 1]
    Q[k - s + 1:] = D[k - s:]
    newT = np.insert(T, k + 1, t)
    return curve.replace(de_boor=Q, knots=newT)


def insert_knots(curve, ts):
    for t in ts:
        curve = insert_knot(curve, float(t))
    return curve


# ----------------------------------------------------------- conversions

def _remap_colors(colors, src_breaks, dst_breaks):
    """Piecewise-affine parameter remap between matching break lists."""
    src = np.asarray(src_breaks, dtype=np.float64)
    dst = np.asarray(dst_breaks, dtype=np.float64)
    out = []
    for c in colors:
        i = int(np.clip(np.searchsorted(src, c.u, side="right") - 1, 0, len(src) - 2))
        w = src[i + 1] - src[i]
        f = (c.u - src[i]) / w if w > 0 else 0.0
        out.append(ColorPoint(c.r, c.g, c.b, float(dst[i] + f * (dst[i + 1] - dst[i]))))
    return out


def _angle_deg(a, b):
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def bezier_to_bspline(bez: BezierCurve, alpha=DEFAULT_ALPHA):
    """Convert a piecewise Bezier curve to a clamped cubic B-spline.

    Segment parameter intervals are scaled so that tangent lengths agree
    across each joint. Joints whose tangent directions differ by less than
    ``alpha`` degrees become double knots (one control point dropped, the
    joint is then C1); all other joints keep a triple knot and stay exact.
    """
    P = bez.control_points
    k = bez.n_segments
    D = [P[0], P[1], P[2], P[3]]
    T = [0.0, 0.0, 0.0, 0.0]
    breaks = [0.0]
    delta, last = 1.0, 0.0
    for i in range(k):
        if i > 0:
            d_end = P[3 * i] - P[3 * i - 1]
            d_start = P[3 * i + 1] - P[3 * i]
            ln_end, ln_start = np.linalg.norm(d_end), np.linalg.norm(d_start)
            if ln_end == 0 or ln_start == 0:
                raise DegenerateJointError(i - 1)
            delta *= ln_start / ln_end
            smooth = _angle_deg(d_end, d_start) < alpha
            if smooth:
                T.extend([last, last])
                D.pop()
            else:
                T.extend([last, last, last])
            D.extend([P[3 * i + 1], P[3 * i + 2], P[3 * i + 3]])
        last += delta
        breaks.append(last)
    T.extend([last] * 4)
    colors_l = _remap_colors(bez.colors_left, np.arange(k + 1), breaks)
    colors_r = _remap_colors(bez.colors_right, np.arange(k + 1), breaks)
    return BSplineCurve(np.array(D), np.array(T), colors_l, colors_r, closed=bez.closed)


def bspline_to_bezier(curve: BSplineCurve, **attrs):
    """Exact Bezier form: every interior knot is raised to multiplicity 3.

    Extra keyword arguments (``barrier``, ``barrier_side``) are passed to the
    resulting :class:`BezierCurve`.
    """
    vals, counts = distinct_interior_knots(curve.knots)
    c = curve
    for v, m in zip(vals, counts):
        for _ in range(DEGREE - m):
            c = insert_knot(c, float(v))
    P = np.array(c.de_boor)
    if curve.closed:
        P[-1] = P[0]
    lo, hi = curve.domain
    breaks = np.concatenate([[lo], vals, [hi]])
    segs = np.arange(len(breaks), dtype=np.float64)
    return BezierCurve(
        control_points=P,
        colors_left=_remap_colors(curve.colors_left, breaks, segs),
        colors_right=_remap_colors(curve.colors_right, breaks, segs),
        closed=curve.closed,
        **attrs,
    )


# ------------------------------------------------------------ arc length

@dataclass(frozen=True)
class ArcLengthTable:
    u: np.ndarray
    s: np.ndarray

    @property
    def total_length(self):
        return float(self.s[-1])

    def length_at(self, u):
        return np.interp(u, self.u, self.s)

    def u_at_length(self, s):
        return np.interp(s, self.s, self.u)


def arc_length_table(curve: BSplineCurve, samples_per_span=ARC_SAMPLES):
    if samples_per_span < 8:
        raise ValueError("samples_per_span must be at least 8")
    breaks = np.unique(curve.knots[DEGREE:-DEGREE])
    parts = [np.linspace(a, b, samples_per_span + 1)[:-1] for a, b in zip(breaks[:-1], breaks[1:])]
    u = np.concatenate(parts + [breaks[-1:]])
    pts = evaluate(curve, u)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    return ArcLengthTable(u, s)


def params_at_lengths(curve, lengths, table=None):
    table = table or arc_length_table(curve)
    return table.u_at_length(lengths)


# ----------------------------------------------------------------- ELSPIA

@dataclass
class FitResult:
    curve: BSplineCurve
    iterations: int
    max_error: float
    converged: bool
    history: list = field(default_factory=list)


def _sample_params(knots, per_span):
    breaks = np.unique(knots[DEGREE:-DEGREE])
    parts = [np.linspace(a, b, per_span + 1)[:-1] for a, b in zip(breaks[:-1], breaks[1:])]
    return np.concatenate(parts + [breaks[-1:]])


def expand_knots_matched(curve: BSplineCurve, target_knots):
    """Insert knots of ``target_knots`` until the knot counts agree.

    Knots are taken greedily: each step inserts the candidate whose curve
    point lies farthest from every knot point present so far. Geometry is
    unchanged.
    """
    target = np.asarray(target_knots, dtype=np.float64)
    need = len(target) - len(curve.knots)
    if need < 0:
        raise ValueError("target knot vector is shorter than the current one")
    if need == 0:
        return curve
    lo, hi = curve.domain
    cand = list(np.unique(target[(target > lo) & (target < hi)]))
    present = np.unique(curve.knots)
    cand = [t for t in cand if not np.any(np.isclose(present, t, rtol=0, atol=1e-12 * (hi - lo)))]
    ref_pts = evaluate(curve, present)
    cand_pts = evaluate(curve, np.asarray(cand)) if cand else np.zeros((0, 2))
    mind = (
        np.min(np.linalg.norm(cand_pts[:, None, :] - ref_pts[None, :, :], axis=2), axis=1)
        if cand else np.zeros(0)
    )
    cand = np.asarray(cand)
    used = np.zeros(len(cand), dtype=bool)
    c = curve
    for _ in range(need):
        if np.all(used):
            # fewer new knot values than required: split the widest span
            br = np.unique(c.knots)
            j = int(np.argmax(np.diff(br)))
            c = insert_knot(c, 0.5 * (br[j] + br[j + 1]))
            continue
        j = int(np.argmax(np.where(used, -np.inf, mind)))
        used[j] = True
        c = insert_knot(c, float(cand[j]))
        d = np.linalg.norm(cand_pts - cand_pts[j], axis=1)
        mind = np.minimum(mind, d)
    return c


def elspia_fit(
    reference: BSplineCurve,
    target_knots,
    energy_weight=1e-3,
    max_iter=200,
    tol=0.25,
    samples_per_span=10,
    initial=None,
):
    """Fit a B-spline with knots ``target_knots`` to ``reference``.

    Gradient (progressive-iterative) updates of the de Boor points minimise
    ``0.5*sum|C(u_j) - R(u_j)|^2 + 0.5*w*sum|D_{i+1} - D_i|^2`` where the
    samples ``u_j`` are shared by both curves. End points stay pinned to the
    reference ends. The step is ``1/L`` with ``L`` a Gershgorin bound of the
    Hessian, so the objective never increases.

    The warm start is the de Boor polygon of the knot-matched expansion of
    the reference (see :func:`expand_knots_matched`) unless ``initial`` is
    given.
    """
    target = np.asarray(target_knots, dtype=np.float64)
    if len(target) == len(reference.knots) and np.array_equal(target, reference.knots):
        return FitResult(reference, 0, 0.0, True, [])
    if not (target[0] == reference.knots[0] and target[-1] == reference.knots[-1]):
        raise ValueError("target knots must span the reference domain")
    if initial is None:
        initial = expand_knots_matched(reference, target).de_boor
    D = np.array(initial, dtype=np.float64)
    if len(D) != len(target) - 4:
        raise ValueError("initial polygon does not match the target knot count")

    u = _sample_params(target, samples_per_span)
    R = evaluate(reference, u)
    A = basis_matrix(target, u)
    At = A.T.tocsr()
    n = len(D)
    w = float(energy_weight)
    L = float(np.max(np.asarray(A.sum(axis=0)).ravel())) + 4.0 * w
    step = 1.0 / L
    D[0], D[-1] = R[0], R[-1]

    def objective(D):
        r = A @ D - R
        e = np.diff(D, axis=0)
        return 0.5 * float(np.sum(r * r)) + 0.5 * w * float(np.sum(e * e)), r

    f, r = objective(D)
    err = float(np.max(np.linalg.norm(r, axis=1)))
    history = [f]
    it = 0
    while err > tol and it < max_iter:
        g = At @ r
        e = np.diff(D, axis=0)
        g[:-1] -= w * e
        g[1:] += w * e
        g[0] = g[-1] = 0.0
        D_new = D - step * g
        f_new, r_new = objective(D_new)
        it += 1
        if f_new > f:  # cannot happen with a valid bound; guard against round-off
            break
        D, f, r = D_new, f_new, r_new
        history.append(f)
        err = float(np.max(np.linalg.norm(r, axis=1)))
        if len(history) > 2 and history[-2] - f <= 1e-15 * max(1.0, history[-2]):
            break
    fitted = reference.replace(de_boor=D, knots=target)
    return FitResult(fitted, it, err, err <= tol, history)


# ------------------------------------------------------ constraint solve

def solve_constraint_offsets(basis, delta_q, residual_limit=1e-6, cond_limit=1e12, ridge=1e-10):
    """Minimum-norm de Boor offsets ``dD`` with ``B @ dD = dQ``.

    Solves ``dD = B^T (B B^T)^-1 dQ`` through a QR factorisation of ``B^T``,
    which avoids squaring the condition number. A near-singular system falls
    back to the normal equations with a small ridge term; the result is
    rejected if the constraint residual then exceeds ``residual_limit``.
    """
    B = basis.toarray() if sp.issparse(basis) else np.asarray(basis, dtype=np.float64)
    dQ = np.asarray(delta_q, dtype=np.float64)
    if dQ.ndim == 1:
        dQ = dQ[:, None]
    m, n = B.shape
    if m > n:
        raise ConstraintSolveError(f"{m} constraints exceed {n} degrees of freedom")
    if m == 0:
        return np.zeros((n, dQ.shape[1]))
    Q, R = np.linalg.qr(B.T)
    d = np.abs(np.diag(R))
    c = np.inf if d.min() == 0 else np.linalg.cond(R) ** 2
    if not np.isfinite(c) or c > cond_limit:
        warnings.warn(f"near-singular constraint system (cond={c:.3g}); regularising", RuntimeWarning)
        try:
            y = np.linalg.solve(B @ B.T + ridge * np.eye(m), dQ)
        except np.linalg.LinAlgError as exc:
            raise ConstraintSolveError(str(exc)) from None
        dD = B.T @ y
    else:
        dD = Q @ linalg.solve_triangular(R, dQ, trans="T")
    res = float(np.max(np.abs(B @ dD - dQ)))
    if res > residual_limit:
        raise ConstraintSolveError(f"constraint residual {res:.3g} exceeds {residual_limit:g}")
    return dD
