"""Colour modulation of contours, margin barriers and inner colour."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np
from skimage import draw, measure

from . import spline as S
from .dci import BezierCurve, BSplineCurve, ColorPoint, DiffusionCurveImage, polygon_signed_area
from .geometry import SkipCurve, distance_transform, outward_sign

LUMA = np.array([0.2126, 0.7152, 0.0722])
BOUNDARY_OFFSET = 0.005
BACKGROUND = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ColorWaveSpec:
    period_length: float
    amplitude_luminance: float
    side: str = "both"

    def __post_init__(self):
        if not self.period_length > 0:
            raise ValueError("period_length must be positive")
        if not 0.0 <= self.amplitude_luminance <= 1.0:
            raise ValueError("amplitude_luminance must lie in [0, 1]")
        if self.side not in ("inner", "both"):
            raise ValueError("side must be 'inner' or 'both'")


@dataclass(frozen=True)
class MarginSpec:
    width: float = math.inf

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("margin width must be positive or inf")


class MarginError(ValueError):
    """The icon has no region a margin barrier could bound."""


# ---------------------------------------------------------------- colours

def luminance(rgb):
    return float(np.dot(LUMA, np.asarray(rgb, dtype=np.float64)))


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def target_luminance(base, adu, stimulus_map=None):
    """Luminance a colour-amplitude value asks for, given the base colour.

    Dark bases (luminance below 0.5) are lifted towards the pole of the
    stimulus scale; light bases are lowered towards the mirrored pole.
    """
    from .perception import DEFAULT_STIMULUS_MAP

    smap = stimulus_map or DEFAULT_STIMULUS_MAP
    y = smap.adu_to_stimulus("col_ampl", adu)
    return y if luminance(base) < 0.5 else 1.0 - y


def set_luminance(base, y_target):
    """Mix ``base`` towards white (to raise) or scale it towards black (to lower)."""
    c = np.asarray(base, dtype=np.float64)
    y = luminance(c)
    if y_target >= y:
        t = (y_target - y) / (1.0 - y) if y < 1.0 else 0.0
        out = c + t * (1.0 - c)
    else:
        out = c * (y_target / y)
    return tuple(float(v) for v in np.clip(out, 0.0, 1.0))


def modulate_luminance(base, adu, stimulus_map=None):
    """Base colour shifted to the luminance of colour-amplitude value ``adu``."""
    return set_luminance(base, target_luminance(base, adu, stimulus_map))


# ------------------------------------------------------------- colormaps

def load_colormaps(path=None):
    """Named colour maps: ``{name: {"anchors": [[r, g, b], ...]}}`` in sRGB [0, 1]."""
    if path is None:
        text = resources.files("icon2glyph").joinpath("data/colormaps.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    data = json.loads(text)
    return {name: np.asarray(entry["anchors"], dtype=np.float64) for name, entry in data.items()}


def colormap_value(anchors, value):
    """Piecewise-linear colour (sRGB) at ``value`` in [0, 1]; anchors equally spaced."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"colormap value {value} outside [0, 1]")
    anchors = np.asarray(anchors, dtype=np.float64)
    x = np.linspace(0.0, 1.0, len(anchors))
    return tuple(float(np.interp(value, x, anchors[:, k])) for k in range(3))


def colormap_linear(name, value, maps=None):
    maps = maps or load_colormaps()
    if name not in maps:
        raise KeyError(f"unknown colormap {name!r}; available: {sorted(maps)}")
    return tuple(float(v) for v in srgb_to_linear(colormap_value(maps[name], value)))


# --------------------------------------------------------- colour intervals

def color_at(colors, u):
    """Colour along a side: piecewise linear in the curve parameter."""
    if not colors:
        return None
    us = np.array([c.u for c in colors])
    rgb = np.array([c.rgb for c in colors])
    return tuple(float(np.interp(u, us, rgb[:, k])) for k in range(3))


def _inner_is_left(curve):
    # the +90 degree normal points inward exactly when outward_sign is -1
    return outward_sign(curve) < 0


def place_color_intervals(curve: BSplineCurve, wave: ColorWaveSpec, arc_curve=None,
                          background=BACKGROUND, stimulus_map=None, adu=None):
    """Split the curve into equal arc-length intervals; recolour every second one.

    Each interval boundary receives two colour points a small parametric
    offset either side, which makes the transition hard. Intervals 1, 3, 5,
    ... carry the modulated colour; the rest keep the original one. Closed
    curves use an even interval count so the pattern closes up. Sides whose
    colour equals ``background`` are left alone.

    ``arc_curve`` (default: ``curve``) is the curve whose arc length defines
    the interval boundaries; the parameter domain must match.

    The modulated colour is ``set_luminance(c, wave.amplitude_luminance)``
    for dark bases and the mirrored luminance for light ones, unless ``adu``
    is given, in which case :func:`modulate_luminance` decides.
    """
    table = S.arc_length_table(arc_curve or curve)
    L = table.total_length
    n = int(math.floor(L / wave.period_length + 1e-9))
    if curve.closed:
        n -= n % 2
    if n < 2:
        raise SkipCurve(f"curve length {L:.3g} holds fewer than two colour intervals")
    ub = table.u_at_length(np.linspace(0.0, L, n + 1))
    ub[0], ub[-1] = curve.domain
    pts = []
    for j in range(1, n):
        pts.append((ub[j] - BOUNDARY_OFFSET * (ub[j] - ub[j - 1]), j - 1))
        pts.append((ub[j] + BOUNDARY_OFFSET * (ub[j + 1] - ub[j]), j))

    def modulated(c):
        if adu is not None:
            return modulate_luminance(c, adu, stimulus_map)
        y = wave.amplitude_luminance if luminance(c) < 0.5 else 1.0 - wave.amplitude_luminance
        return set_luminance(c, y)

    def process(colors):
        if not colors:
            return colors
        out = []
        for c in colors:
            k = int(np.clip(np.searchsorted(ub, c.u, side="right") - 1, 0, n - 1))
            out.append(c if k % 2 == 0 else ColorPoint(*modulated(c.rgb), c.u))
        for u, k in pts:
            rgb = color_at(colors, u)
            if k % 2 == 1:
                rgb = modulated(rgb)
            out.append(ColorPoint(*rgb, float(u)))
        return out

    def is_background(colors):
        return all(np.allclose(c.rgb, background, atol=1e-9) for c in colors)

    sides = {"left": curve.colors_left, "right": curve.colors_right}
    if wave.side == "inner" and curve.closed:
        keep = "left" if _inner_is_left(curve) else "right"
        active = {keep}
    else:
        active = {"left", "right"}
    new = {}
    for name, colors in sides.items():
        if name in active and colors and not is_background(colors):
            new[name] = process(colors)
        else:
            new[name] = colors
    return curve.replace(colors_left=new["left"], colors_right=new["right"])


# ------------------------------------------------------------ margins

def _closed_loops(curves, snap=1.0):
    """Polylines of closed curves plus chains of open curves that close up."""
    loops, open_parts = [], []
    for c in curves:
        if c.barrier:
            continue
        p, _ = c.polyline(0.5)
        (loops if c.closed else open_parts).append(p)
    while open_parts:
        chain = open_parts.pop(0)
        grown = True
        while grown and np.linalg.norm(chain[0] - chain[-1]) > snap:
            grown = False
            for i, q in enumerate(open_parts):
                for cand in (q, q[::-1]):
                    if np.linalg.norm(chain[-1] - cand[0]) <= snap:
                        chain = np.vstack([chain, cand[1:]])
                        open_parts.pop(i)
                        grown = True
                        break
                if grown:
                    break
        if np.linalg.norm(chain[0] - chain[-1]) <= snap and len(chain) > 3:
            loops.append(chain)
    return loops


def interior_mask(dci: DiffusionCurveImage, pad=0):
    """Even-odd fill of the icon's closed contours on the unit grid."""
    H = int(math.ceil(dci.height)) + 2 * pad + 1
    W = int(math.ceil(dci.width)) + 2 * pad + 1
    mask = np.zeros((H, W), dtype=bool)
    loops = _closed_loops(dci.curves)
    if not loops:
        raise MarginError("icon has no closed contour; a margin needs an interior")
    for p in loops:
        rr, cc = draw.polygon(p[:, 1] + pad, p[:, 0] + pad, shape=(H, W))
        fill = np.zeros_like(mask)
        fill[rr, cc] = True
        mask ^= fill
    return mask


def interior_distance(dci: DiffusionCurveImage, pad=4):
    """Signed distance to the contour: positive inside, negative outside."""
    field = distance_transform([c for c in dci.curves if not c.barrier], dci.width, dci.height, pad=pad)
    H, W = field.shape
    # exact distance to a representative sample of each feature cell
    rep = np.full(H * W, -1, dtype=np.int64)
    cell = field._cell(field.points)
    flat = cell[:, 1] * W + cell[:, 0]
    ok = (cell[:, 0] >= 0) & (cell[:, 0] < W) & (cell[:, 1] >= 0) & (cell[:, 1] < H)
    centre = cell + field.origin
    off = np.linalg.norm(field.points - centre, axis=1)
    order = np.argsort(-off)  # later writes (smaller offsets) win
    order = order[ok[order]]
    rep[flat[order]] = order
    ys, xs = np.mgrid[0:H, 0:W]
    grid_pts = np.stack([xs + field.origin[0], ys + field.origin[1]], axis=-1)
    src = rep[field.feature]
    d = np.linalg.norm(grid_pts - field.points[src], axis=-1)
    mask = interior_mask(dci, pad=field.pad)
    return np.where(mask, d, -d), field


def _fit_closed_bspline(poly, max_error=0.5, max_spans=400):
    """Least-squares closed cubic B-spline through a closed polyline."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    s /= L
    spans = max(4, int(L / 24))
    while True:
        inner = np.linspace(0.0, 1.0, spans + 1)[1:-1]
        T = np.concatenate([[0.0] * 4, inner, [1.0] * 4])
        B = S.basis_matrix(T, s).toarray()
        # pin both ends to the (shared) start point
        B_in = B[:, 1:-1]
        rhs = poly - np.outer(B[:, 0] + B[:, -1], poly[0])
        Din, *_ = np.linalg.lstsq(B_in, rhs, rcond=None)
        D = np.vstack([poly[0], Din, poly[0]])
        err = np.max(np.linalg.norm(B @ D - poly, axis=1))
        if err <= max_error or spans >= max_spans:
            return BSplineCurve(D, T, closed=True), err
        spans = min(max_spans, spans * 2)


def _inner_colors(curve, background=BACKGROUND):
    """Colour points on the side of ``curve`` that faces the icon interior."""
    sides = [curve.colors_left, curve.colors_right]
    if curve.closed:
        if polygon_signed_area(curve.polyline(1.0)[0]) < 0:
            sides.reverse()
    else:
        sides.sort(key=lambda cs: not cs or all(np.allclose(c.rgb, background) for c in cs))
    return sides[0] or sides[1]


def _side_colors(dci, field, curve_pts, default):
    """Interior colour of the original contour nearest to each barrier point."""
    cache = {}
    out = []
    for p in curve_pts:
        j = field.nearest(p)
        cid = int(field.curve_ids[j])
        if cid not in cache:
            cache[cid] = _inner_colors(dci.curves[cid])
        out.append(color_at(cache[cid], float(field.params[j])) or default)
    return out


def build_margin_barrier(icon: DiffusionCurveImage, margin: MarginSpec, base_icon=None,
                         fill=(0.0, 0.0, 0.0)):
    """Append closed barrier curves along the interior isoline at ``margin.width``.

    The isoline is traced by marching squares on the signed contour
    distance and refitted to a closed cubic B-spline. Barriers block every
    pixel edge they cross; their colour points sit on the inner side only
    and carry the interior colour of the nearest contour (``fill`` when a
    contour has no colour there). ``base_icon`` supplies those colours if
    the contour geometry was modulated in ``icon``.
    """
    if math.isinf(margin.width):
        return icon
    dist, field = interior_distance(icon)
    if margin.width >= dist.max():
        warnings.warn(
            f"margin width {margin.width:g} exceeds the largest interior distance "
            f"{dist.max():.3g}; no inner region", RuntimeWarning)
        return icon
    src = base_icon or icon
    src_field = field if base_icon is None else distance_transform(
        [c for c in src.curves if not c.barrier], src.width, src.height, pad=4)
    barriers = []
    for contour in measure.find_contours(dist, margin.width):
        if len(contour) < 8 or np.linalg.norm(contour[0] - contour[-1]) > 1e-6:
            continue
        poly = contour[:, ::-1] + field.origin
        bs, _ = _fit_closed_bspline(poly)
        bez = S.bspline_to_bezier(bs)
        # which side of the barrier is inside the inner region
        u_mid = 0.5 * bez.n_segments
        p = bez.evaluate([u_mid])[0]
        d = bez.derivative([u_mid])[0]
        nrm = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        probe = p + 1.5 * nrm
        H, W = dist.shape
        ci = np.clip(np.round(probe - field.origin).astype(int), 0, [W - 1, H - 1])
        left_inner = dist[ci[1], ci[0]] > margin.width
        us = np.arange(bez.n_segments + 1, dtype=float)
        cols = _side_colors(src, src_field, bez.evaluate(us), fill)
        pts = [ColorPoint(*rgb, u) for rgb, u in zip(cols, us)]
        side = "left" if left_inner else "right"
        barriers.append(BezierCurve(
            bez.control_points,
            colors_left=pts if left_inner else (),
            colors_right=() if left_inner else pts,
            closed=True, barrier=True, barrier_side=side,
        ))
    return icon.replace(curves=list(icon.curves) + barriers)


def set_inner_color(icon: DiffusionCurveImage, rgb):
    """Give every barrier's inner-side colour points the linear colour ``rgb``."""
    rgb = tuple(float(v) for v in rgb)
    out, found = [], False
    for c in icon.curves:
        if not c.barrier:
            out.append(c)
            continue
        found = True
        def paint(cs):
            return [ColorPoint(*rgb, p.u) for p in cs]
        if c.barrier_side in ("left", "both"):
            c = c.replace(colors_left=paint(c.colors_left))
        if c.barrier_side in ("right", "both"):
            c = c.replace(colors_right=paint(c.colors_right))
        out.append(c)
    if not found:
        raise MarginError("no barrier present; use a finite margin width to create an inner region")
    return icon.replace(curves=out)


def set_inner_colormap(icon, value, colormap="viridis", maps=None):
    return set_inner_color(icon, colormap_linear(colormap, value, maps))
