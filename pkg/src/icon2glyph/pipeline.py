"""Icon + visual-variable levels -> modulated diffusion curve image."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import spline as S
from .color import ColorWaveSpec, MarginSpec, build_margin_barrier, place_color_intervals, set_inner_color
from .dci import DiffusionCurveImage, GlyphParams, validate
from .geometry import DEFAULT_EPSILON, SkipCurve, WaveSpec, distance_transform, make_shape, reparam_for_frequency
from .perception import PerceptualModel, level_to_stimulus, load_model, size_transfer


@dataclass(frozen=True)
class GlyphSettings:
    glyph_mm: float = 50.0
    alpha: float = S.DEFAULT_ALPHA
    epsilon: float = DEFAULT_EPSILON
    fit_tol: float = 0.25
    omega_min: float = None
    epsilon_slack: float = None
    align_color: bool = False


@dataclass
class GlyphReport:
    stimuli: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)


def scaled_levels(model: PerceptualModel, glyph_mm, omega_min=None, epsilon_slack=None):
    omega = min(glyph_mm / model.reference_mm, 1.0)
    return size_transfer(model, omega, omega_min, epsilon_slack)


def _check_level(scaled, var, level):
    avail = scaled[var].levels
    if level > avail:
        raise ValueError(f"{var} level {level} exceeds the {avail} levels available at this glyph size")


def _aligned_count(n_geom, n_color, closed):
    """Colour interval count whose boundaries fall on whole geometric periods."""
    options = [m for m in range(2, n_geom + 1) if n_geom % m == 0 and (m % 2 == 0 or not closed)]
    options += [n_geom * j for j in range(2, n_color // max(n_geom, 1) + 2)]
    options = [m for m in options if m % 2 == 0 or not closed]
    if not options:
        return None
    return min(options, key=lambda m: (abs(m - n_color), m))


def generate_glyph(icon: DiffusionCurveImage, params: GlyphParams, model: PerceptualModel = None,
                   settings: GlyphSettings = GlyphSettings(), report: GlyphReport = None):
    """Apply the visual-variable levels of ``params`` to ``icon``.

    The icon canvas is taken to span ``settings.glyph_mm`` millimetres, which
    fixes the canvas length of the model's mm stimuli. Curves too short for
    the requested period are left unmodified (and listed in ``report``).
    """
    validate(icon)
    model = model or load_model()
    report = report if report is not None else GlyphReport()
    scaled = scaled_levels(model, settings.glyph_mm, settings.omega_min, settings.epsilon_slack)
    per_mm = icon.width / settings.glyph_mm

    use_geom = params.geom_freq_level > 0 and params.geom_ampl_level > 0
    use_color = params.color_freq_level > 0 and params.color_ampl_level > 0
    if use_geom:
        _check_level(scaled, "geom_freq", params.geom_freq_level)
        _check_level(scaled, "geom_ampl", params.geom_ampl_level)
        period = level_to_stimulus(model, scaled["geom_freq"], params.geom_freq_level, params.shape)
        ampl = level_to_stimulus(model, scaled["geom_ampl"], params.geom_ampl_level, params.shape)
        wave = WaveSpec(params.shape, period * per_mm, ampl * per_mm)
        report.stimuli.update(geom_period_mm=period, geom_ampl_mm=ampl)
    if use_color:
        _check_level(scaled, "col_freq", params.color_freq_level)
        _check_level(scaled, "col_ampl", params.color_ampl_level)
        cperiod = level_to_stimulus(model, scaled["col_freq"], params.color_freq_level)
        campl = level_to_stimulus(model, scaled["col_ampl"], params.color_ampl_level)
        cwave = ColorWaveSpec(cperiod * per_mm, campl, side="inner")
        report.stimuli.update(color_period_mm=cperiod, color_luminance=campl)

    contours = [c for c in icon.curves if not c.barrier]
    field_ = distance_transform(contours, icon.width, icon.height) if use_geom and contours else None
    out = []
    for index, bez in enumerate(icon.curves):
        if bez.barrier or not (use_geom or use_color):
            out.append(bez)
            continue
        curve = S.bezier_to_bspline(bez, settings.alpha)
        base = curve
        n_geom = None
        if use_geom:
            try:
                base = reparam_for_frequency(curve, wave, tol=settings.fit_tol)
                curve = make_shape(base, wave, field_, settings.epsilon)
                n_geom = (len(S.distinct_interior_knots(base.knots)[0]) + 1) // 4
            except SkipCurve as exc:
                report.skipped.append((index, "geometry", str(exc)))
                base = curve
        if use_color:
            colour_wave = cwave
            if settings.align_color and n_geom:
                L = S.arc_length_table(base).total_length
                m = _aligned_count(n_geom, int(math.floor(L / cwave.period_length + 1e-9)), base.closed)
                if m:
                    colour_wave = ColorWaveSpec(L / (m + 0.5), cwave.amplitude_luminance, cwave.side)
            try:
                curve = place_color_intervals(curve, colour_wave, arc_curve=base)
            except SkipCurve as exc:
                report.skipped.append((index, "color", str(exc)))
        out.append(S.bspline_to_bezier(curve, barrier=bez.barrier, barrier_side=bez.barrier_side))
    glyph = icon.replace(curves=out)

    if not math.isinf(params.margin_width):
        glyph = build_margin_barrier(glyph, MarginSpec(params.margin_width), base_icon=icon)
    if params.inner_color is not None:
        glyph = set_inner_color(glyph, params.inner_color)
    validate(glyph)
    return glyph


__all__ = ["GlyphSettings", "GlyphReport", "generate_glyph", "scaled_levels"]
