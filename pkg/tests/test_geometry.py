import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from icon2glyph import spline as S
from icon2glyph.dci import BezierCurve
from icon2glyph.geometry import (
    DistanceField,
    SkipCurve,
    WaveSpec,
    apply_amplitude,
    clamp_amplitude,
    distance_transform,
    knot_point_params,
    make_shape,
    modulate_curve,
    outward_sign,
    reparam_for_frequency,
    skeleton_amplitude,
)
from conftest import intersection_count, line_bspline, load_icon


def point_field(points, size=16):
    pts = np.asarray(points, dtype=float)
    return DistanceField(pts, np.zeros(len(pts), int), np.zeros(len(pts)), size, size, pad=8)


def spacing(curve):
    u = knot_point_params(curve)
    table = S.arc_length_table(curve, 256)
    return np.diff(table.length_at(u))


# ------------------------------------------------------------ wave specs

@pytest.mark.parametrize("kw", [dict(shape="sinusoidal", period_length=0),
                                dict(shape="sinusoidal", period_length=1, amplitude=-1),
                                dict(shape="zigzag", period_length=1)])
def test_wave_rejects_bad_fields(kw):
    with pytest.raises(ValueError):
        WaveSpec(**kw)


# ------------------------------------------------------- distance field

def test_distance_to_vertical_line():
    line = BezierCurve([[10, 0], [10, 10], [10, 20], [10, 32]])
    f = distance_transform([line], 32, 32)
    for y in (4.0, 16.0, 27.5):
        assert f.value([20.0, y]) == pytest.approx(10.0, abs=0.25)
    # grid values agree with the refined lookup
    assert f.dist[16 + f.pad, 20 + f.pad] == pytest.approx(10.0, abs=0.25)
    assert np.all(f.dist >= 0)


def test_distance_between_parallel_lines():
    a = BezierCurve([[0, 10], [10, 10], [20, 10], [32, 10]])
    b = BezierCurve([[0, 18], [10, 18], [20, 18], [32, 18]])
    f = distance_transform([a, b], 32, 32)
    assert f.value([16.0, 14.0]) == pytest.approx(4.0, abs=0.25)
    assert f.curve_ids[f.nearest([16.0, 12.0])] == 0
    assert f.curve_ids[f.nearest([16.0, 16.5])] == 1


def test_zero_on_curve_samples():
    line = BezierCurve([[2, 5], [10, 5], [20, 5], [30, 5]])
    f = distance_transform([line], 32, 32)
    for p in f.points[::17]:
        assert f.value(p) == 0.0


def test_empty_geometry():
    with pytest.raises(ValueError, match="no geometry"):
        distance_transform([], 32, 32)


# ------------------------------------------------------------ clamping

def test_clamp_facing_point():
    f = point_field([[0.0, 2.0]])
    assert clamp_amplitude([0, 0], [0, 1], 5.0, f, epsilon=0) == pytest.approx(1.0)


def test_clamp_oblique_point_is_equidistant():
    K, n, N = np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])
    a = skeleton_amplitude(K, n, N)
    assert a == pytest.approx(1.0)
    Sk = K + a * n
    assert abs(np.linalg.norm(Sk - K) - np.linalg.norm(Sk - N)) < 1e-12
    f = point_field([N])
    assert clamp_amplitude(K, n, 5.0, f, epsilon=0) == pytest.approx(1.0, abs=1e-12)


def test_clamp_epsilon_and_floor():
    f = point_field([[0.0, 2.0]])
    assert clamp_amplitude([0, 0], [0, 1], 5.0, f, epsilon=0.25) == pytest.approx(0.75)
    assert clamp_amplitude([0, 0], [0, 1], 5.0, f, epsilon=3.0) == 0.0


def test_clamp_unobstructed():
    # own-curve samples only, behind and beside K
    f = point_field([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, -3.0]])
    assert clamp_amplitude([0, 0], [0, 1], 2.5, f, epsilon=3) == 2.5


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2 * math.pi), st.floats(0, 10),
       st.floats(0, 4))
def test_clamp_never_grows(nx, ny, ang, a, eps):
    f = point_field([[nx, ny], [0.0, 0.0]])
    n = np.array([math.cos(ang), math.sin(ang)])
    out = clamp_amplitude([0.0, 0.0], n, a, f, epsilon=eps)
    assert 0.0 <= out <= a
    N = np.array([nx, ny])
    # nothing within the corridor of length 2a along the normal: unchanged
    if np.dot(N, n) <= 0 or np.linalg.norm(N) > 2 * a + 1:
        assert out == a


# ------------------------------------------------------- reparametrise

def test_line_reparam_spacing():
    c = line_bspline(40.0)
    r = reparam_for_frequency(c, WaveSpec("sinusoidal", 10.0))
    u = knot_point_params(r)
    # 4 periods x 4 spans: 15 interior knot points plus the two ends
    assert len(u) == 17
    assert np.allclose(spacing(r), 2.5, atol=1e-6)


def test_reparam_too_short():
    with pytest.raises(SkipCurve):
        reparam_for_frequency(line_bspline(40.0), WaveSpec("sinusoidal", 21.0))


def test_circle_reparam_spacing():
    c = S.bezier_to_bspline(load_icon("circle").curves[0])
    L = S.arc_length_table(c).total_length
    r = reparam_for_frequency(c, WaveSpec("sinusoidal", L / 8))
    d = spacing(r)
    assert len(d) == 32
    assert np.max(np.abs(d - L / 32)) <= 0.02 * L / 32


@pytest.mark.parametrize("period", [46.3, 14.1])
def test_reparam_keeps_corners(period):
    c = S.bezier_to_bspline(load_icon("heart").curves[0])
    vals, counts = np.unique(c.knots, return_counts=True)
    corner = vals[(counts == 3)][0]
    r = reparam_for_frequency(c, WaveSpec("sinusoidal", period))
    assert np.count_nonzero(r.knots == corner) == 3
    # the corner is an even knot point, so it is a zero crossing of the wave
    assert np.flatnonzero(knot_point_params(r) == corner)[0] % 2 == 0
    assert np.allclose(S.evaluate(r, [corner]), S.evaluate(c, [corner]), atol=0.05)
    d = spacing(r)
    assert np.max(np.abs(d - d.mean())) <= 0.02 * d.mean()


def test_reparam_keeps_colours():
    icon = load_icon("virus")
    c = S.bezier_to_bspline(icon.curves[0])
    r = reparam_for_frequency(c, WaveSpec("sinusoidal", 20.0))
    assert r.colors_left == c.colors_left and r.colors_right == c.colors_right


# --------------------------------------------------------------- shapes

def test_zero_amplitude_identity():
    c = reparam_for_frequency(line_bspline(40.0), WaveSpec("sinusoidal", 10.0))
    out = apply_amplitude(c, WaveSpec("sinusoidal", 10.0, 0.0))
    u = np.linspace(*c.domain, 500)
    assert np.max(np.linalg.norm(S.evaluate(out, u) - S.evaluate(c, u), axis=1)) < 1e-9


def test_sinusoid_on_line():
    wave = WaveSpec("sinusoidal", 10.0, 1.0)
    c = reparam_for_frequency(line_bspline(40.0), wave)
    out = apply_amplitude(c, wave)
    peaks = knot_point_params(c)[1:-1:2]
    y = S.evaluate(out, peaks)[:, 1]
    assert np.allclose(np.abs(y), 1.0, atol=1e-6)
    assert np.all(np.sign(y[:-1]) != np.sign(y[1:]))
    # peaks interpolate exactly; ends stay put
    assert np.allclose(S.evaluate(out, c.domain[0]), [0, 0], atol=1e-8)
    assert np.allclose(S.evaluate(out, c.domain[1]), [40, 0], atol=1e-8)


def count_extrema(curve):
    u = np.linspace(*curve.domain, 20001)
    dy = S.evaluate(curve, u, der=1)[:, 1]
    s = np.sign(dy[np.abs(dy) > 1e-9])
    return int(np.sum(s[1:] != s[:-1]))


def test_sinusoid_extrema_count():
    wave = WaveSpec("sinusoidal", 10.0, 2.0)
    out = make_shape(reparam_for_frequency(line_bspline(60.0), wave), wave)
    assert count_extrema(out) == 2 * 6


def corner_params(curve):
    vals, counts = S.distinct_interior_knots(curve.knots)
    return vals[counts == 3]


def test_rectangular_strips_are_straight():
    wave = WaveSpec("rectangular", 10.0, 2.0)
    out = make_shape(reparam_for_frequency(line_bspline(40.0), wave), wave)
    br = np.concatenate([[out.domain[0]], corner_params(out), [out.domain[1]]])
    for a, b in zip(br[:-1], br[1:]):
        u = np.linspace(a, b, 12)[1:-1]
        assert np.max(np.linalg.norm(S.evaluate(out, u, der=2), axis=1)) < 1e-6
    y = S.evaluate(out, 0.5 * (br[1:] + br[:-1]))[:, 1]
    plateaus = y[np.abs(y) > 1.0]
    assert np.allclose(np.abs(plateaus), 2.0, atol=1e-6)


def test_sawtooth_alternates():
    wave = WaveSpec("sawtooth", 10.0, 1.5)
    base = reparam_for_frequency(line_bspline(40.0), wave)
    out = make_shape(base, wave)
    corners = knot_point_params(base)[1:-1:2]
    y = S.evaluate(out, corners)[:, 1]
    assert np.allclose(y, 1.5 * np.where(np.arange(len(y)) % 2 == 0, 1, -1), atol=1e-6)


@pytest.mark.parametrize("shape", ["rectangular", "sawtooth"])
def test_corners_have_tangent_jumps(shape):
    wave = WaveSpec(shape, 10.0, 2.0)
    out = make_shape(reparam_for_frequency(line_bspline(40.0), wave), wave)
    corners = corner_params(out)
    assert len(corners) > 0
    for t in corners:
        a = S.evaluate(out, t, der=1, side="left")
        b = S.evaluate(out, t, der=1, side="right")
        ang = math.degrees(math.acos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1)))
        assert ang > 10.0


def test_parallel_contours_do_not_cross():
    a = BezierCurve([[20, 60], [60, 60], [100, 60], [140, 60]])
    # reversed and shifted so facing peaks line up
    b = BezierCurve([[134, 64], [94, 64], [54, 64], [14, 64]])
    field = distance_transform([a, b], 160, 128)
    out = []
    wave = WaveSpec("sinusoidal", 12.0, 5.0)
    for bez in (a, b):
        out.append(modulate_curve(S.bezier_to_bspline(bez), wave, field, epsilon=3.0))
    assert intersection_count(out) == 0
    # without the clamp the same waves collide
    free = [modulate_curve(S.bezier_to_bspline(c), wave) for c in (a, b)]
    assert intersection_count(free) > 0


def test_closed_curve_waves_outward_first():
    c = S.bezier_to_bspline(load_icon("circle").curves[0])
    assert outward_sign(c) == -1.0  # counter-clockwise: +90 normal points inward
    wave = WaveSpec("sinusoidal", 60.0, 10.0)
    out = modulate_curve(c, wave)
    first_peak = knot_point_params(reparam_for_frequency(c, wave))[1]
    r = np.linalg.norm(S.evaluate(out, first_peak) - [256, 256])
    assert r == pytest.approx(210.0, abs=0.5)
