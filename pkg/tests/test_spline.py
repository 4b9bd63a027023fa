import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import BSpline

from icon2glyph import spline as S
from icon2glyph.dci import BezierCurve, BSplineCurve, ColorPoint
from conftest import line_bspline, load_icon, random_bezier, random_bspline


def sample_dev(a, b, n=1000):
    lo, hi = a.domain
    u = np.linspace(lo, hi, n)
    return float(np.max(np.linalg.norm(S.evaluate(a, u) - S.evaluate(b, u), axis=1)))


def bez_dev(a, b, n=1000):
    u = np.linspace(0, a.n_segments, n)
    return float(np.max(np.linalg.norm(a.evaluate(u) - b.evaluate(u), axis=1)))


# ------------------------------------------------------------ evaluation

def test_clamped_start_is_first_de_boor_point():
    c = random_bspline(np.random.default_rng(1))
    assert np.allclose(S.evaluate(c, c.domain[0]), c.de_boor[0], atol=1e-14)
    assert np.allclose(S.evaluate(c, c.domain[1]), c.de_boor[-1], atol=1e-14)


def test_straight_line_mid_domain():
    c = BSplineCurve([[0, 0], [1, 0], [2, 0], [3, 0]], [0, 0, 0, 0, 1, 1, 1, 1])
    assert S.evaluate(c, 0.5)[1] == 0.0
    d = S.evaluate(c, 0.5, der=1)
    fd = (S.evaluate(c, 0.5 + 1e-6) - S.evaluate(c, 0.5 - 1e-6)) / 2e-6
    assert np.allclose(d / np.linalg.norm(d), [1, 0])
    assert np.linalg.norm(d - fd) <= 1e-6 * np.linalg.norm(d)


def test_matches_scipy_bspline():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = random_bspline(rng, n_ctrl=int(rng.integers(4, 12)))
        ref = BSpline(c.knots, c.de_boor, 3)
        u = np.linspace(0, 1, 301)[:-1]
        assert np.allclose(S.evaluate(c, u), ref(u), atol=1e-10)
        assert np.allclose(S.evaluate(c, u, der=1), ref.derivative(1)(u), atol=1e-8)
        assert np.allclose(S.evaluate(c, u, der=2), ref.derivative(2)(u), atol=1e-6)


@given(st.integers(0, 10_000))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    c = random_bspline(rng, n_ctrl=int(rng.integers(4, 10)))
    h = 1e-6
    u = rng.uniform(0.01, 0.99, 8)
    # keep samples off knots, where one-sided derivatives differ
    u = u[np.min(np.abs(u[:, None] - c.knots[None, :]), axis=1) > 10 * h]
    for der in (1, 2):
        fd = (S.evaluate(c, u + h, der=der - 1) - S.evaluate(c, u - h, der=der - 1)) / (2 * h)
        d = S.evaluate(c, u, der=der)
        scale = np.maximum(np.linalg.norm(d, axis=1), 1.0)
        tol = 1e-6 if der == 1 else 1e-4
        assert np.all(np.linalg.norm(d - fd, axis=1) <= tol * scale)


def test_domain_error():
    c = line_bspline()
    with pytest.raises(S.SplineDomainError):
        S.evaluate(c, c.domain[1] + 1.0)


@given(st.integers(0, 10_000))
def test_partition_of_unity(seed):
    rng = np.random.default_rng(seed)
    c = random_bspline(rng, n_ctrl=int(rng.integers(4, 14)))
    B = S.basis_matrix(c.knots, rng.uniform(0, 1, 50))
    assert np.allclose(np.asarray(B.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    assert max(np.diff(B.indptr)) <= 4


# ------------------------------------------------------------ conversion

def test_single_segment_conversion():
    bez = BezierCurve([[0, 0], [1, 2], [3, 2], [4, 0]])
    c = S.bezier_to_bspline(bez)
    assert np.array_equal(c.de_boor, bez.control_points)
    assert list(c.knots) == [0, 0, 0, 0, 1, 1, 1, 1]


def test_c1_joint_becomes_double_knot():
    bez = BezierCurve([[0, 0], [1, 1], [2, 1], [3, 1], [4, 1], [5, 1], [6, 0]])
    c = S.bezier_to_bspline(bez, alpha=3.5)
    vals, counts = S.distinct_interior_knots(c.knots)
    assert list(counts) == [2]
    # 4 + 3 points for two segments, minus the dropped joint point
    assert len(c.de_boor) == 6
    assert bez_dev(bez, S.bspline_to_bezier(c)) < 1e-9


def test_right_angle_joint_keeps_triple_knot():
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [3, 0], [3, 1], [3, 2], [3, 3]])
    c = S.bezier_to_bspline(bez, alpha=3.5)
    vals, counts = S.distinct_interior_knots(c.knots)
    assert list(counts) == [3]
    assert len(c.de_boor) == 7
    assert bez_dev(bez, S.bspline_to_bezier(c)) < 1e-9


def test_knot_interval_scaling_matches_tangent_lengths():
    # second segment twice as fast at the joint: its interval doubles
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [3, 0], [5, 0], [7, 0], [9, 0]])
    c = S.bezier_to_bspline(bez, alpha=0.0)
    vals, _ = S.distinct_interior_knots(c.knots)
    assert vals[0] == pytest.approx(1.0)
    assert c.knots[-1] == pytest.approx(3.0)
    d_left = S.evaluate(c, 1.0, der=1, side="left")
    d_right = S.evaluate(c, 1.0, der=1, side="right")
    assert np.allclose(d_left, d_right)


def test_degenerate_joint():
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [2, 0], [2, 0], [3, 1], [4, 0]])
    with pytest.raises(S.DegenerateJointError):
        S.bezier_to_bspline(bez)


def test_colour_points_remapped():
    cols = [ColorPoint(1, 0, 0, 0.0), ColorPoint(0, 1, 0, 1.5), ColorPoint(0, 0, 1, 2.0)]
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [3, 0], [5, 0], [7, 0], [9, 0]], colors_left=cols)
    c = S.bezier_to_bspline(bez, alpha=0.0)
    assert [p.u for p in c.colors_left] == pytest.approx([0.0, 2.0, 3.0])
    back = S.bspline_to_bezier(c)
    assert [p.u for p in back.colors_left] == pytest.approx([0.0, 1.5, 2.0])


def test_round_trip_alpha_zero_fixtures():
    for name in ("circle", "heart", "virus"):
        for bez in load_icon(name).curves:
            back = S.bspline_to_bezier(S.bezier_to_bspline(bez, 0.0))
            assert bez_dev(bez, back) < 1e-9


def test_single_span_bspline_to_bezier():
    c = random_bspline(np.random.default_rng(0), n_ctrl=4)
    assert np.array_equal(S.bspline_to_bezier(c).control_points, c.de_boor)


@given(st.integers(0, 10_000))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    bez = random_bezier(rng, int(rng.integers(1, 6)))
    back = S.bspline_to_bezier(S.bezier_to_bspline(bez, 0.0))
    assert bez_dev(bez, back) < 1e-9


# ------------------------------------------------------------ insertion

def test_insert_at_existing_knot():
    c = random_bspline(np.random.default_rng(2), n_ctrl=6)
    t = float(c.knots[4])
    d = S.insert_knot(c, t)
    assert S.multiplicity(d.knots, t) == 2
    assert len(d.de_boor) == len(c.de_boor) + 1
    assert sample_dev(c, d) < 1e-12


def test_insert_keeps_line_collinear():
    c = line_bspline(30.0, y=2.0)
    d = S.insert_knot(c, 0.5 * sum(c.domain))
    assert np.allclose(d.de_boor[:, 1], 2.0, atol=1e-14)


def test_insert_multiplicity_overflow():
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [3, 0], [3, 1], [3, 2], [3, 3]])
    c = S.bezier_to_bspline(bez, 0.0)
    with pytest.raises(S.KnotMultiplicityError):
        S.insert_knot(c, 1.0)


def test_insert_outside_domain():
    c = line_bspline()
    with pytest.raises(S.SplineDomainError):
        S.insert_knot(c, c.domain[0])


@given(st.integers(0, 10_000))
def test_random_insertions(seed):
    rng = np.random.default_rng(seed)
    c = random_bspline(rng, n_ctrl=8)
    d = S.insert_knots(c, rng.uniform(0.001, 0.999, 10))
    assert len(d.de_boor) == len(c.de_boor) + 10
    assert sample_dev(c, d) < 1e-12


# ------------------------------------------------------------ arc length

def test_arc_length_line():
    c = line_bspline(10.0)
    t = S.arc_length_table(c)
    assert t.total_length == pytest.approx(10.0, abs=1e-9)
    assert t.u_at_length(5.0) == pytest.approx(0.5 * sum(c.domain), abs=1e-9)
    assert t.s[0] == 0.0 and np.all(np.diff(t.s) >= 0)


def test_arc_length_needs_samples():
    with pytest.raises(ValueError):
        S.arc_length_table(line_bspline(), 4)


def test_arc_length_circle_fixture_against_quadrature():
    bez = load_icon("circle").curves[0]
    c = S.bezier_to_bspline(bez)
    table = S.arc_length_table(c)

    def speed(u):
        return float(np.linalg.norm(bez.derivative([u])[0]))
    exact = sum(integrate.quad(speed, i, i + 1, epsabs=1e-12)[0] for i in range(bez.n_segments))
    assert abs(table.total_length - exact) / exact < 1e-3
    assert abs(exact - 2 * math.pi * 200) / (2 * math.pi * 200) < 1e-3


# ---------------------------------------------------------------- ELSPIA

def test_elspia_same_knots_is_identity():
    c = random_bspline(np.random.default_rng(5))
    r = S.elspia_fit(c, c.knots)
    assert r.iterations == 0 and r.curve is c


def test_elspia_line_reproduced():
    c = line_bspline(40.0)
    target = np.concatenate([[0] * 4, np.linspace(0, 1, 9)[1:-1], [1] * 4])
    r = S.elspia_fit(c, target, tol=1e-10)
    assert np.array_equal(r.curve.knots, target)
    u = np.linspace(0, 1, 500)
    assert np.max(np.abs(S.evaluate(r.curve, u)[:, 1])) < 1e-9
    assert np.max(np.linalg.norm(S.evaluate(r.curve, u) - S.evaluate(c, u), axis=1)) < 1e-9


def test_elspia_circle_to_32_uniform_knots():
    c = S.bezier_to_bspline(load_icon("circle").curves[0])
    table = S.arc_length_table(c)
    t = table.u_at_length(np.linspace(0, table.total_length, 33))
    t[0], t[-1] = c.domain
    target = np.concatenate([[t[0]] * 4, t[1:-1], [t[-1]] * 4])
    r = S.elspia_fit(c, target, tol=0.25)
    assert r.converged
    assert sample_dev(c, r.curve, 4000) < 0.25
    assert np.all(np.diff(r.history) <= 1e-12 * max(1.0, r.history[0]))


@given(st.integers(0, 10_000))
def test_elspia_error_monotone(seed):
    rng = np.random.default_rng(seed)
    c = random_bspline(rng, n_ctrl=6)
    target = np.concatenate([[0] * 4, np.sort(rng.uniform(0.02, 0.98, 9)), [1] * 4])
    r = S.elspia_fit(c, target, tol=1e-6, max_iter=60)
    h = np.asarray(r.history)
    assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))


def test_expand_knots_identity():
    c = random_bspline(np.random.default_rng(9))
    assert S.expand_knots_matched(c, c.knots) is c


def test_expand_knots_picks_farther_candidate():
    # two spans, the second ten times longer in space
    bez = BezierCurve([[0, 0], [1, 0], [2, 0], [3, 0], [13, 0], [23, 0], [33, 0]])
    c = S.bezier_to_bspline(bez, 0.0)
    lo, hi = c.domain
    mid = float(S.distinct_interior_knots(c.knots)[0][0])
    cands = [0.5 * (lo + mid), 0.5 * (mid + hi)]
    # one insertion requested, both candidate values offered
    target = list(c.knots) + cands
    target.remove(mid)
    c2 = S.expand_knots_matched(c, np.sort(target))
    inserted = np.setdiff1d(np.unique(c2.knots), np.unique(c.knots))
    assert len(c2.knots) == len(c.knots) + 1 and inserted.size == 1

    present = S.evaluate(c, np.unique(c.knots))

    def spread(t):
        return np.min(np.linalg.norm(present - S.evaluate(c, t), axis=1))
    assert inserted[0] == pytest.approx(max(cands, key=spread))
    assert sample_dev(c, c2) < 1e-12


# ----------------------------------------------------- constraint solve

def test_zero_offsets():
    B = S.basis_matrix(line_bspline().knots, [0.2, 0.5, 0.8])
    assert np.all(S.solve_constraint_offsets(B, np.zeros((3, 2))) == 0)


def test_endpoint_constraint_moves_first_point_only():
    c = random_bspline(np.random.default_rng(4), n_ctrl=7)
    B = S.basis_matrix(c.knots, [0.0])
    dD = S.solve_constraint_offsets(B, [[1.5, -2.0]])
    assert np.allclose(dD[0], [1.5, -2.0])
    assert np.allclose(dD[1:], 0.0)


@given(st.integers(0, 10_000))
def test_minimum_norm_solution(seed):
    rng = np.random.default_rng(seed)
    B = rng.uniform(0, 1, size=(5, 12))
    dQ = rng.normal(size=(5, 2))
    dD = S.solve_constraint_offsets(B, dQ)
    assert np.max(np.abs(B @ dD - dQ)) < 1e-8
    assert np.allclose(dD, np.linalg.pinv(B) @ dQ, atol=1e-6)
    # any other exact solution adds a null-space component and is longer
    null = np.linalg.svd(B)[2][5:].T
    alt = dD + null @ rng.normal(size=(7, 2))
    assert np.linalg.norm(dD) <= np.linalg.norm(alt) + 1e-12


def test_too_many_constraints():
    with pytest.raises(S.ConstraintSolveError):
        S.solve_constraint_offsets(np.ones((3, 2)), np.zeros((3, 2)))


def test_singular_system_rejected():
    B = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(S.ConstraintSolveError):
            S.solve_constraint_offsets(B, [[0.0], [1.0]])


def test_singular_but_consistent_system_regularised():
    B = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.warns(RuntimeWarning, match="near-singular"):
        dD = S.solve_constraint_offsets(B, [[1.0], [1.0]])
    assert dD[0, 0] == pytest.approx(1.0, abs=1e-8)
