"""Regenerate the bundled fixture icons in src/icon2glyph/data/icons."""

import argparse
from pathlib import Path

import numpy as np

from icon2glyph import BezierCurve, ColorPoint, DiffusionCurveImage, save_dci

WHITE = (1.0, 1.0, 1.0)


def side(rgb, k):
    return [ColorPoint(*rgb, 0.0), ColorPoint(*rgb, float(k))]


def hermite_loop(points, tangents, dtheta):
    """Closed piecewise-cubic Bezier through ``points`` with given derivatives.

    Handles use the circular-arc length 4/3*tan(dtheta/4), which makes a
    constant-radius loop accurate to well under a canvas unit.
    """
    n = len(points)
    h = 4.0 / 3.0 * np.tan(dtheta / 4.0)
    cps = [points[0]]
    for i in range(n):
        j = (i + 1) % n
        cps += [points[i] + tangents[i] * h, points[j] - tangents[j] * h, points[j]]
    cps[-1] = cps[0]
    return np.array(cps)


def polar_loop(cx, cy, radius, dradius, segments):
    th = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    r, dr = radius(th), dradius(th)
    pts = np.column_stack([cx + r * np.cos(th), cy + r * np.sin(th)])
    tan = np.column_stack([dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th)])
    return hermite_loop(pts, tan, 2 * np.pi / segments)


def circle_curve(cx, cy, r, inner, outer, segments=4):
    cps = polar_loop(cx, cy, lambda t: np.full_like(t, r), lambda t: np.zeros_like(t), segments)
    # counter-clockwise in canvas coordinates: the interior is on the left
    return BezierCurve(cps, side(inner, segments), side(outer, segments), closed=True)


def circle():
    return DiffusionCurveImage(512, 512, [circle_curve(256, 256, 200, (0.05, 0.1, 0.35), WHITE)])


def ring():
    outer = circle_curve(256, 256, 200, (0.35, 0.05, 0.05), WHITE)
    hole = circle_curve(256, 256, 110, WHITE, (0.35, 0.05, 0.05))
    return DiffusionCurveImage(512, 512, [outer, hole])


def heart():
    notch, tip = (256.0, 170.0), (256.0, 440.0)
    right = [notch, (300, 100), (420, 110), (420, 220), (420, 300), (330, 360), tip]
    left = [(182, 360), (92, 300), (92, 220), (92, 110), (212, 100), notch]
    cps = np.array(right + left, dtype=float)
    # orientation: notch -> right lobe -> tip -> left lobe, interior on the left
    return DiffusionCurveImage(512, 512, [BezierCurve(cps, side((0.45, 0.02, 0.08), 4), side(WHITE, 4), closed=True)])


def virus():
    cps = polar_loop(256, 256, lambda t: 170 + 22 * np.cos(8 * t), lambda t: -176 * np.sin(8 * t), 32)
    return DiffusionCurveImage(512, 512, [BezierCurve(cps, side((0.1, 0.3, 0.1), 32), side(WHITE, 32), closed=True)])


def line(y, x0, x1, left, right):
    cps = np.array([[x0, y], [x0 + (x1 - x0) / 3, y], [x0 + 2 * (x1 - x0) / 3, y], [x1, y]], dtype=float)
    return BezierCurve(cps, side(left, 1), side(right, 1))


def stress():
    # two parallel open contours 8 canvas units apart
    dark, light = (0.1, 0.1, 0.1), (0.8, 0.8, 0.8)
    return DiffusionCurveImage(512, 512, [line(252, 56, 456, light, dark), line(260, 56, 456, dark, light)])


FIXTURES = {"circle": circle, "ring": ring, "heart": heart, "virus": virus, "stress": stress}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/icon2glyph/data/icons"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in FIXTURES.items():
        save_dci(make(), out / f"{name}.dci")
        print(out / f"{name}.dci")


if __name__ == "__main__":
    main()
