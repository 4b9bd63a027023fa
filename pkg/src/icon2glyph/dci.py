"""Diffusion-curve image (DCI) data model and its JSON file format.

A DCI is a canvas plus a list of cubic Bezier curves. Every curve carries
colour points on its left and right side; "left" is the side the normal
(tangent rotated by +90 degrees in canvas coordinates) points to. Colour
point parameters use the segment-indexed parameter of the Bezier curve:
segment ``i`` spans ``[i, i + 1]``, so a curve of ``k`` segments has the
domain ``[0, k]``.

Colours are stored as linear RGB in [0, 1]; quantisation to 8 bit happens
only when a raster is written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

SIDES = ("left", "right", "both")
SHAPES = ("sinusoidal", "rectangular", "sawtooth")


class DCIParseError(ValueError):
    """Raised when a DCI or parameter file cannot be parsed."""


class DCIValidationError(ValueError):
    """Raised when a parsed DCI violates a data-model invariant."""

    def __init__(self, message, curve_index=None):
        self.curve_index = curve_index
        if curve_index is not None:
            message = f"curve {curve_index}: {message}"
        super().__init__(message)


class ControlPoint2D(NamedTuple):
    x: float
    y: float


class ColorPoint(NamedTuple):
    r: float
    g: float
    b: float
    u: float

    @property
    def rgb(self):
        return (self.r, self.g, self.b)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _sorted_colors(colors):
    return tuple(sorted((ColorPoint(*map(float, c)) for c in colors), key=lambda c: c.u))


@dataclass(frozen=True)
class BezierCurve:
    """Piecewise cubic Bezier curve with ``3k + 1`` control points."""

    control_points: np.ndarray
    colors_left: tuple = ()
    colors_right: tuple = ()
    closed: bool = False
    barrier: bool = False
    barrier_side: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "control_points", _frozen(self.control_points).reshape(-1, 2))
        object.__setattr__(self, "colors_left", _sorted_colors(self.colors_left))
        object.__setattr__(self, "colors_right", _sorted_colors(self.colors_right))

    @property
    def n_segments(self):
        return (len(self.control_points) - 1) // 3

    @property
    def domain(self):
        return (0.0, float(self.n_segments))

    def segment(self, i):
        return self.control_points[3 * i:3 * i + 4]

    def evaluate(self, u):
        """Evaluate at global parameters ``u`` in ``[0, k]``."""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        k = self.n_segments
        idx = np.clip(np.floor(u).astype(int), 0, k - 1)
        t = (u - idx)[:, None]
        P = self.control_points
        p0, p1, p2, p3 = (P[3 * idx + m] for m in range(4))
        s = 1.0 - t
        return s**3 * p0 + 3 * s**2 * t * p1 + 3 * s * t**2 * p2 + t**3 * p3

    def derivative(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        k = self.n_segments
        idx = np.clip(np.floor(u).astype(int), 0, k - 1)
        t = (u - idx)[:, None]
        P = self.control_points
        p0, p1, p2, p3 = (P[3 * idx + m] for m in range(4))
        s = 1.0 - t
        return 3 * (s**2 * (p1 - p0) + 2 * s * t * (p2 - p1) + t**2 * (p3 - p2))

    def polyline(self, step=0.5):
        """Dense samples ``(points, params)`` with spacing at most ``step``."""
        pts, us = [], []
        for i in range(self.n_segments):
            seg = self.segment(i)
            hull = float(np.sum(np.linalg.norm(np.diff(seg, axis=0), axis=1)))
            n = max(2, int(math.ceil(hull / step)) + 1)
            t = np.linspace(0.0, 1.0, n)
            if i > 0:
                t = t[1:]
            us.append(i + t)
        u = np.concatenate(us)
        return self.evaluate(u), u

    def replace(self, **changes):
        data = dict(
            control_points=self.control_points,
            colors_left=self.colors_left,
            colors_right=self.colors_right,
            closed=self.closed,
            barrier=self.barrier,
            barrier_side=self.barrier_side,
        )
        data.update(changes)
        return BezierCurve(**data)


@dataclass(frozen=True)
class BSplineCurve:
    """Clamped cubic B-spline; the working form while a glyph is built."""

    de_boor: np.ndarray
    knots: np.ndarray
    colors_left: tuple = ()
    colors_right: tuple = ()
    closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "de_boor", _frozen(self.de_boor).reshape(-1, 2))
        object.__setattr__(self, "knots", _frozen(self.knots).ravel())
        object.__setattr__(self, "colors_left", _sorted_colors(self.colors_left))
        object.__setattr__(self, "colors_right", _sorted_colors(self.colors_right))
        n, T = len(self.de_boor), self.knots
        if len(T) != n + 4:
            raise DCIValidationError(f"knot count {len(T)} != de Boor count {n} + 4")
        if np.any(np.diff(T) < 0):
            raise DCIValidationError("knot vector is decreasing")
        if not (T[0] == T[3] and T[-1] == T[-4]):
            raise DCIValidationError("knot vector is not clamped")
        if T[-1] <= T[0]:
            raise DCIValidationError("empty parameter domain")
        _, counts = np.unique(T[4:-4], return_counts=True)
        if counts.size and counts.max() > 3:
            raise DCIValidationError("interior knot multiplicity exceeds 3")

    @property
    def domain(self):
        return (float(self.knots[3]), float(self.knots[-4]))

    def replace(self, **changes):
        data = dict(
            de_boor=self.de_boor,
            knots=self.knots,
            colors_left=self.colors_left,
            colors_right=self.colors_right,
            closed=self.closed,
        )
        data.update(changes)
        return BSplineCurve(**data)


@dataclass(frozen=True)
class DiffusionCurveImage:
    width: float
    height: float
    curves: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))

    def replace(self, **changes):
        data = dict(width=self.width, height=self.height, curves=self.curves)
        data.update(changes)
        return DiffusionCurveImage(**data)


@dataclass(frozen=True)
class GlyphParams:
    """Settings of the seven visual variables, in quantised level units.

    A level of 0 leaves the variable unused. ``margin_width`` is in canvas
    units, ``math.inf`` meaning no inner region.
    """

    shape: str = "sinusoidal"
    geom_freq_level: int = 0
    geom_ampl_level: int = 0
    color_freq_level: int = 0
    color_ampl_level: int = 0
    margin_width: float = math.inf
    inner_color: Optional[tuple] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        for name in ("geom_freq_level", "geom_ampl_level", "color_freq_level", "color_ampl_level"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (self.margin_width > 0):
            raise ValueError("margin_width must be positive or inf")
        if self.inner_color is not None:
            rgb = tuple(float(c) for c in self.inner_color)
            if len(rgb) != 3 or not all(0.0 <= c <= 1.0 for c in rgb):
                raise ValueError("inner_color must be three channels in [0, 1]")
            object.__setattr__(self, "inner_color", rgb)


# ---------------------------------------------------------------- validation

def _check_colors(colors, lo, hi, where, index):
    for c in colors:
        for ch in (c.r, c.g, c.b):
            if not (0.0 <= ch <= 1.0):
                raise DCIValidationError(f"{where} colour channel {ch} outside [0, 1]", index)
        if not (lo - 1e-12 <= c.u <= hi + 1e-12):
            raise DCIValidationError(f"{where} colour parameter {c.u} outside [{lo}, {hi}]", index)


def validate_curve(curve, index=None):
    P = curve.control_points
    if len(P) < 4 or (len(P) - 1) % 3:
        raise DCIValidationError(f"control point count {len(P)}: length not 3k+1", index)
    if not np.all(np.isfinite(P)):
        raise DCIValidationError("non-finite control point", index)
    if curve.barrier_side not in SIDES:
        raise DCIValidationError(f"barrier_side {curve.barrier_side!r} not in {SIDES}", index)
    if curve.closed and np.linalg.norm(P[0] - P[-1]) > 1e-6 * max(1.0, float(np.abs(P).max())):
        raise DCIValidationError("closed curve whose end points do not coincide", index)
    lo, hi = curve.domain
    _check_colors(curve.colors_left, lo, hi, "left", index)
    _check_colors(curve.colors_right, lo, hi, "right", index)


def validate(dci):
    if not (dci.width > 0 and dci.height > 0):
        raise DCIValidationError(f"canvas {dci.width}x{dci.height} must be positive")
    for i, c in enumerate(dci.curves):
        validate_curve(c, i)
    return dci


# ----------------------------------------------------------------------- I/O

def _num(x):
    # repr round-trips doubles exactly (17 significant digits at most)
    return float(repr(float(x)))


def _require(obj, key, where):
    if key not in obj:
        raise DCIParseError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_colors(items, where):
    out = []
    for j, c in enumerate(items):
        try:
            out.append(ColorPoint(float(c["r"]), float(c["g"]), float(c["b"]), float(c["u"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DCIParseError(f"{where}[{j}]: bad colour point ({exc})") from None
    return out


def dci_from_dict(data):
    if not isinstance(data, dict):
        raise DCIParseError("top level must be an object")
    width = _require(data, "width", "top level")
    height = _require(data, "height", "top level")
    curves = []
    for i, c in enumerate(_require(data, "curves", "top level")):
        where = f"curves[{i}]"
        try:
            pts = np.asarray(_require(c, "control_points", where), dtype=np.float64)
        except ValueError as exc:
            raise DCIParseError(f"{where}.control_points: {exc}") from None
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DCIParseError(f"{where}.control_points: expected a list of [x, y] pairs")
        curves.append(BezierCurve(
            control_points=pts,
            colors_left=_parse_colors(c.get("colors_left", []), f"{where}.colors_left"),
            colors_right=_parse_colors(c.get("colors_right", []), f"{where}.colors_right"),
            closed=bool(c.get("closed", False)),
            barrier=bool(c.get("barrier", False)),
            barrier_side=str(c.get("barrier_side", "both")),
        ))
    try:
        dci = DiffusionCurveImage(float(width), float(height), curves)
    except (TypeError, ValueError) as exc:
        raise DCIParseError(f"top level: bad canvas size ({exc})") from None
    return validate(dci)


def dci_to_dict(dci):
    def colors(cs):
        return [{"r": _num(c.r), "g": _num(c.g), "b": _num(c.b), "u": _num(c.u)} for c in cs]

    return {
        "width": _num(dci.width),
        "height": _num(dci.height),
        "curves": [
            {
                "closed": c.closed,
                "barrier": c.barrier,
                "barrier_side": c.barrier_side,
                "control_points": [[_num(x), _num(y)] for x, y in c.control_points],
                "colors_left": colors(c.colors_left),
                "colors_right": colors(c.colors_right),
            }
            for c in dci.curves
        ],
    }


def load_dci(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DCIParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return dci_from_dict(data)


def save_dci(dci, path):
    validate(dci)
    Path(path).write_text(json.dumps(dci_to_dict(dci), indent=1) + "\n", encoding="utf-8")


# ------------------------------------------------------------- glyph params

def params_from_dict(d):
    margin = d.get("margin_width", "infinite")
    if margin in (None, "infinite", "inf"):
        margin = math.inf
    try:
        return GlyphParams(
            shape=d.get("shape", "sinusoidal"),
            geom_freq_level=d.get("geom_freq", 0),
            geom_ampl_level=d.get("geom_ampl", 0),
            color_freq_level=d.get("color_freq", 0),
            color_ampl_level=d.get("color_ampl", 0),
            margin_width=float(margin),
            inner_color=d.get("inner_color"),
        )
    except (TypeError, ValueError) as exc:
        raise DCIParseError(f"glyph parameters: {exc}") from None


def params_to_dict(p):
    return {
        "shape": p.shape,
        "geom_freq": p.geom_freq_level,
        "geom_ampl": p.geom_ampl_level,
        "color_freq": p.color_freq_level,
        "color_ampl": p.color_ampl_level,
        "margin_width": "infinite" if math.isinf(p.margin_width) else p.margin_width,
        "inner_color": list(p.inner_color) if p.inner_color is not None else None,
    }


def load_params(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DCIParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return params_from_dict(data)


def save_params(params, path):
    Path(path).write_text(json.dumps(params_to_dict(params), indent=1) + "\n", encoding="utf-8")


def polygon_signed_area(points: Sequence) -> float:
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
