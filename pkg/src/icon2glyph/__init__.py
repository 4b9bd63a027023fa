"""Glyphs from icons: contour and colour modulation of diffusion-curve images
driven by a calibrated perceptual model."""

from .dci import (
    BezierCurve,
    BSplineCurve,
    ColorPoint,
    DCIParseError,
    DCIValidationError,
    DiffusionCurveImage,
    GlyphParams,
    load_dci,
    load_params,
    save_dci,
    save_params,
)

__version__ = "0.1.0"

__all__ = [
    "BezierCurve",
    "BSplineCurve",
    "ColorPoint",
    "DCIParseError",
    "DCIValidationError",
    "DiffusionCurveImage",
    "GlyphParams",
    "load_dci",
    "load_params",
    "save_dci",
    "save_params",
]
