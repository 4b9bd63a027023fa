"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 some records of
a batch failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .color import colormap_linear
from .dci import DCIParseError, DCIValidationError, GlyphParams, load_dci, load_params, save_dci
from .encoder import batch_generate, emit_legend, load_rules
from .spline import ConstraintSolveError, DegenerateJointError, bezier_to_bspline, bspline_to_bezier
from .perception import ModelError, build_model, describe_model, load_model, read_survey, save_model
from .pipeline import GlyphReport, GlyphSettings, generate_glyph
from .render import RenderError, render_glyph

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
CONFIG_ENV = "ICON2GLYPH_CONFIG"
SHAPE_ALIASES = {"sin": "sinusoidal", "sinusoidal": "sinusoidal", "rect": "rectangular",
                 "rectangular": "rectangular", "saw": "sawtooth", "sawtooth": "sawtooth"}


@dataclass(frozen=True)
class Config:
    glyph_mm: float = 50.0
    size_px: int = None        # output pixels on the longer side; default canvas size
    dpi: float = None          # alternative to size_px: glyph_mm at this resolution
    model: str = None          # perceptual model file; default the shipped one
    epsilon: float = 3.0       # skeleton clamp offset, canvas units
    alpha: float = 3.5         # joint smoothness threshold, degrees
    fit_tol: float = 0.25
    tol: float = 1e-4
    max_iter: int = 50
    colormap: str = "viridis"
    omega_min: float = None
    epsilon_slack: float = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and not v > 0:
                raise ValueError(f"config value {f.name} must be positive, got {v!r}")

    def output_px(self, icon):
        if self.size_px:
            return int(self.size_px)
        if self.dpi:
            return max(1, int(round(self.glyph_mm * self.dpi / 25.4)))
        return int(round(max(icon.width, icon.height)))

    def glyph_settings(self):
        return GlyphSettings(self.glyph_mm, self.alpha, self.epsilon, self.fit_tol,
                             self.omega_min, self.epsilon_slack)


def load_config(path=None):
    """Config from ``path``, else from ``$ICON2GLYPH_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValueError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    known = {f.name for f in fields(Config)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"config file {path}: unknown keys {sorted(unknown)}")
    return Config(**data)


def _apply_flags(cfg, args):
    changes = {}
    for f in fields(Config):
        v = getattr(args, f.name, None)
        if v is not None:
            changes[f.name] = v
    return replace(cfg, **changes)


def _model(cfg):
    if cfg.model and not Path(cfg.model).exists():
        raise ModelError(f"model file {cfg.model} not found")
    return load_model(cfg.model)


def _rgb(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected r,g,b") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated channels")
    return vals


def _shape(text):
    try:
        return SHAPE_ALIASES[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown shape {text!r}") from None


def _margin(text):
    return math.inf if text in ("inf", "infinite") else float(text)


# ---------------------------------------------------------------- commands

def cmd_convert(args, cfg):
    dci = load_dci(args.input)
    barriers = sum(c.barrier for c in dci.curves)
    segments = sum(c.n_segments for c in dci.curves)
    print(f"{args.input}: {dci.width:g} x {dci.height:g} canvas, {len(dci.curves)} curves, "
          f"{segments} segments, {barriers} barriers")
    if args.check_spline:
        worst = 0.0
        for c in dci.curves:
            back = bspline_to_bezier(bezier_to_bspline(c, 0.0))
            u = np.linspace(*c.domain, 50 * c.n_segments + 1)
            worst = max(worst, float(np.max(np.linalg.norm(back.evaluate(u) - c.evaluate(u), axis=1))))
        print(f"spline round trip: max deviation {worst:.3g}")
    if args.output:
        save_dci(dci, args.output)
        print(f"wrote {args.output}")
    return EXIT_OK


def _params_from_args(args, cfg):
    if args.params:
        p = load_params(args.params)
    else:
        p = GlyphParams(args.shape, args.freq, args.ampl, args.col_freq, args.col_ampl,
                        args.margin if args.margin is not None else math.inf, args.inner_color)
    if args.inner_value is not None:
        p = replace(p, inner_color=colormap_linear(cfg.colormap, args.inner_value))
    return p


def cmd_glyph(args, cfg):
    icon = load_dci(args.icon)
    model = _model(cfg)
    if args.rules:
        rules = load_rules(args.rules)
        out_dir = Path(args.output or ".")
        entries = emit_legend(rules, icon, out_dir, model, cfg.glyph_settings(), cfg.output_px(icon))
        for e in entries:
            print(f"{e.path}\t{e.column}\t{e.variable}\tlevel {e.level}\t{e.label}")
        return EXIT_OK
    params = _params_from_args(args, cfg)
    report = GlyphReport()
    glyph = generate_glyph(icon, params, model, cfg.glyph_settings(), report)
    out = args.output or "glyph.png"
    render_glyph(glyph, cfg.output_px(icon), tol=cfg.tol, max_iter=cfg.max_iter).save(out)
    if args.dci_out:
        save_dci(glyph, args.dci_out)
    for k, v in report.stimuli.items():
        print(f"{k} = {v:.4g}")
    for index, what, why in report.skipped:
        print(f"curve {index}: {what} skipped ({why})", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_render(args, cfg):
    dci = load_dci(args.input)
    img = render_glyph(dci, cfg.output_px(dci), tol=cfg.tol, max_iter=cfg.max_iter)
    img.save(args.output)
    print(f"wrote {args.output} ({img.width}x{img.height}, residual {img.residual:.2g})")
    return EXIT_OK


def cmd_calibrate(args, cfg):
    if args.use_default:
        model = load_model(None)
    else:
        if not args.survey:
            raise ModelError("give a survey CSV or --use-default")
        model, report = build_model(read_survey(args.survey))
        print(report)
    print(describe_model(model))
    if args.output:
        save_model(model, args.output)
        print(f"wrote {args.output}")
    return EXIT_OK


def cmd_encode(args, cfg):
    rules = load_rules(args.rules)
    icon = load_dci(args.icon)
    model = _model(cfg)
    res = batch_generate(args.data, rules, icon, args.out_dir, model, cfg.glyph_settings(),
                         cfg.output_px(icon))
    for row in res.rows:
        print(f"{row['key']}\t{row['status']}\t{row['file'] or row['error']}")
    if args.legend:
        emit_legend(rules, icon, args.out_dir, model, cfg.glyph_settings(), args.legend_px)
    print(f"manifest: {res.manifest}")
    if res.failed:
        print(f"{len(res.failed)} of {len(res.rows)} records failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _common(p):
    g = p.add_argument_group("configuration (overrides the config file)")
    g.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    g.add_argument("--glyph-mm", dest="glyph_mm", type=float, help="physical glyph size in mm (default 50)")
    g.add_argument("--size-px", dest="size_px", type=int, help="output pixels on the longer side")
    g.add_argument("--dpi", type=float, help="output resolution; size = glyph-mm at this dpi")
    g.add_argument("--model", help="perceptual model file (default: shipped model)")
    g.add_argument("--epsilon", type=float, help="skeleton clamp offset in canvas units (default 3)")
    g.add_argument("--alpha", type=float, help="joint smoothness threshold in degrees (default 3.5)")
    g.add_argument("--fit-tol", dest="fit_tol", type=float, help="curve refit tolerance, canvas units")
    g.add_argument("--tol", type=float, help="diffusion solver tolerance (default 1e-4)")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="diffusion solver iteration cap (default 50)")
    g.add_argument("--colormap", help="colormap for inner colours (default viridis)")
    g.add_argument("--omega-min", dest="omega_min", type=float, help="scale of the minimum stimuli")
    g.add_argument("--epsilon-slack", dest="epsilon_slack", type=float,
                   help="slack added to the scale of the maximum stimuli")


def build_parser():
    ap = argparse.ArgumentParser(prog="icon2glyph", description="Turn diffusion-curve icons into data glyphs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="validate a DCI file and optionally rewrite it")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="write the normalised file here")
    p.add_argument("--check-spline", action="store_true", help="report the B-spline round-trip deviation")
    _common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("glyph", help="modulate an icon and render the glyph (or legends with --rules)")
    p.add_argument("icon")
    p.add_argument("-o", "--output", help="output PNG (legend directory with --rules)")
    p.add_argument("--params", help="glyph parameter file instead of the level flags")
    p.add_argument("--rules", help="rules file: render one legend miniature per level")
    p.add_argument("--shape", type=_shape, default="sinusoidal", help="sin, rect or saw")
    p.add_argument("--freq", type=int, default=0, help="geometric frequency level (0 = off)")
    p.add_argument("--ampl", type=int, default=0, help="geometric amplitude level (0 = off)")
    p.add_argument("--col-freq", dest="col_freq", type=int, default=0, help="colour frequency level")
    p.add_argument("--col-ampl", dest="col_ampl", type=int, default=0, help="colour amplitude level")
    p.add_argument("--margin", type=_margin, help="margin width in canvas units (default inf)")
    p.add_argument("--inner-color", dest="inner_color", type=_rgb, help="inner colour r,g,b (linear)")
    p.add_argument("--inner-value", dest="inner_value", type=float,
                   help="inner colour as a colormap position in [0, 1]")
    p.add_argument("--dci-out", dest="dci_out", help="also save the modulated DCI")
    _common(p)
    p.set_defaults(func=cmd_glyph)

    p = sub.add_parser("calibrate", help="build a perceptual model from survey data")
    p.add_argument("survey", nargs="?")
    p.add_argument("-o", "--output", help="model file to write")
    p.add_argument("--use-default", dest="use_default", action="store_true",
                   help="report (and optionally write) the shipped default model")
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("encode", help="one glyph per data record")
    p.add_argument("data", help="CSV with a header row")
    p.add_argument("rules", help="rules file")
    p.add_argument("icon", help="base icon (DCI)")
    p.add_argument("--out-dir", dest="out_dir", default="glyphs")
    p.add_argument("--legend", action="store_true", help="also write legend miniatures")
    p.add_argument("--legend-px", dest="legend_px", type=int, default=128)
    _common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("render", help="render a DCI file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="PNG, or PPM when the name ends in .ppm")
    _common(p)
    p.set_defaults(func=cmd_render)
    return ap


INPUT_ERRORS = (DCIParseError, DCIValidationError, ModelError, FileNotFoundError, ValueError,
                OSError)
NUMERIC_ERRORS = (ConstraintSolveError, DegenerateJointError, ArithmeticError, np.linalg.LinAlgError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        return args.func(args, cfg)
    except NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
