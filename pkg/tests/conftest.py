import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from shapely.geometry import LinearRing, LineString

from icon2glyph import spline as S
from icon2glyph.dci import BezierCurve, BSplineCurve, ColorPoint, DiffusionCurveImage, load_dci

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

# PASS/FAIL lines from test_acceptance.py, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


FIXTURES = Path(__file__).parent / "fixtures"
ICON_NAMES = ("circle", "ring", "heart", "virus", "stress")


def icon_path(name):
    return Path(str(resources.files("icon2glyph").joinpath(f"data/icons/{name}.dci")))


def rules_path(name):
    return Path(str(resources.files("icon2glyph").joinpath(f"data/rules/{name}.json")))


def load_icon(name):
    return load_dci(icon_path(name))


@pytest.fixture(scope="session")
def icons():
    return {name: load_icon(name) for name in ICON_NAMES}


def line_bspline(length=40.0, y=0.0, spans=1):
    """Straight clamped cubic along the x axis with uniform speed."""
    n = 3 * spans + 1
    xs = np.linspace(0.0, length, n)
    bez = BezierCurve(np.column_stack([xs, np.full(n, y)]))
    return S.bezier_to_bspline(bez, alpha=0.0)


def disk_icon(radius=100.0, size=256.0, color=(0.1, 0.2, 0.6), segments=8):
    """Closed Bezier approximation of a circle, counter-clockwise, coloured inside."""
    c = size / 2
    dt = 2 * math.pi / segments
    h = 4.0 / 3.0 * math.tan(dt / 4) * radius
    pts = []
    for i in range(segments):
        a0, a1 = i * dt, (i + 1) * dt
        p0 = np.array([c + radius * math.cos(a0), c + radius * math.sin(a0)])
        p3 = np.array([c + radius * math.cos(a1), c + radius * math.sin(a1)])
        t0 = np.array([-math.sin(a0), math.cos(a0)])
        t1 = np.array([-math.sin(a1), math.cos(a1)])
        if i == 0:
            pts.append(p0)
        pts += [p0 + h * t0, p3 - h * t1, p3]
    pts[-1] = pts[0]
    inner = [ColorPoint(*color, 0.0), ColorPoint(*color, float(segments))]
    curve = BezierCurve(np.array(pts), colors_left=inner, closed=True)
    return DiffusionCurveImage(size, size, [curve])


def random_bezier(rng, segments, scale=100.0):
    pts = rng.uniform(0, scale, size=(3 * segments + 1, 2))
    return BezierCurve(pts)


def random_bspline(rng, n_ctrl=8, scale=100.0):
    inner = np.sort(rng.uniform(0.05, 0.95, n_ctrl - 4))
    knots = np.concatenate([[0.0] * 4, inner, [1.0] * 4])
    return BSplineCurve(rng.uniform(0, scale, size=(n_ctrl, 2)), knots)


def dense_polyline(curve, step=0.25):
    if isinstance(curve, BSplineCurve):
        lo, hi = curve.domain
        L = S.arc_length_table(curve, 16).total_length
        u = np.linspace(lo, hi, max(2, int(math.ceil(L / step)) + 1))
        return S.evaluate(curve, u)
    return curve.polyline(step)[0]


def intersection_count(curves, step=0.25):
    """Self and pairwise crossings of densely sampled curves (shapely oracle)."""
    geoms = []
    bad = 0
    for c in curves:
        p = dense_polyline(c, step)
        p = p[np.r_[True, np.any(np.abs(np.diff(p, axis=0)) > 1e-12, axis=1)]]
        closed = getattr(c, "closed", False)
        g = LinearRing(p[:-1] if closed and np.allclose(p[0], p[-1]) else p) if closed else LineString(p)
        if not g.is_simple:
            bad += 1
        geoms.append(g)
    for i in range(len(geoms)):
        for j in range(i + 1, len(geoms)):
            if geoms[i].intersects(geoms[j]):
                bad += 1
    return bad
