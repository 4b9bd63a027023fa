"""Data records -> glyph levels, legends and batch output.

A rules file is JSON::

    {"shape": "sinusoidal", "key": "district", "fixed": {"geom_ampl": 2},
     "rules": [
       {"column": "cases7", "variable": "geom_freq", "breaks": [0, 300, 900]},
       {"column": "free_beds", "variable": "geom_freq",
        "intervals": [">15", "]10,15]", "[0,10]"]}
     ]}

``breaks`` ``[b0, ..., bn]`` is shorthand for ``[b0,b1[ ... >=bn``.
``intervals`` lists one interval per level, level 1 first, in the usual
bracket notation (``[a,b[``, ``]a,b]``, ``>=a``, ``>a``, ``<b``, ``<=b``).
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .color import colormap_linear
from .dci import GlyphParams, SHAPES, params_to_dict
from .perception import PerceptualModel, load_model
from .pipeline import GlyphSettings, generate_glyph, scaled_levels
from .render import render_glyph

VARIABLES = ("geom_freq", "geom_ampl", "color_freq", "color_ampl",
             "combined_freq", "combined_ampl", "inner_color", "margin_width")
# model variable(s) behind each level-valued encoding variable
MODEL_VARIABLES = {
    "geom_freq": ("geom_freq",), "geom_ampl": ("geom_ampl",),
    "color_freq": ("col_freq",), "color_ampl": ("col_ampl",),
    "combined_freq": ("geom_freq", "col_freq"), "combined_ampl": ("geom_ampl", "col_ampl"),
}
DEFAULT_MARGIN_MAX = 64.0


class RuleError(ValueError):
    """Malformed rules file or a rule the model cannot serve."""


class EncodeError(ValueError):
    """A record cannot be encoded."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = False

    def __contains__(self, x):
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    @property
    def label(self):
        if math.isinf(self.hi) and not math.isinf(self.lo):
            return f"{'>=' if self.lo_closed else '>'} {self.lo:g}"
        if math.isinf(self.lo) and not math.isinf(self.hi):
            return f"{'<=' if self.hi_closed else '<'} {self.hi:g}"
        return f"{'[' if self.lo_closed else ']'}{self.lo:g}, {self.hi:g}{']' if self.hi_closed else '['}"


_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)"
_BRACKET = re.compile(r"^([\[\]])\s*" + _NUM + r"\s*,\s*" + _NUM + r"\s*([\[\]])$")
_COMPARE = re.compile(r"^(>=|≥|>|<=|≤|<)\s*" + _NUM + "$")


def parse_interval(text):
    s = str(text).strip()
    m = _BRACKET.match(s)
    if m:
        lo, hi = float(m.group(2)), float(m.group(3))
        if lo > hi:
            raise RuleError(f"interval {s!r} is empty")
        return Interval(lo, hi, m.group(1) == "[", m.group(4) == "]")
    m = _COMPARE.match(s)
    if m:
        op, v = m.group(1), float(m.group(2))
        if op in (">=", "≥"):
            return Interval(v, math.inf, True, False)
        if op == ">":
            return Interval(v, math.inf, False, False)
        if op in ("<=", "≤"):
            return Interval(-math.inf, v, False, True)
        return Interval(-math.inf, v, False, False)
    raise RuleError(f"cannot parse interval {s!r}")


def _check_partition(intervals, where):
    order = sorted(intervals, key=lambda iv: (iv.lo, not iv.lo_closed))
    for a, b in zip(order, order[1:]):
        if a.hi != b.lo:
            gap = "overlap" if a.hi > b.lo else "gap"
            raise RuleError(f"{where}: intervals {a.label} and {b.label} leave a {gap}")
        if a.hi_closed == b.lo_closed:
            raise RuleError(f"{where}: intervals {a.label} and {b.label} "
                            f"{'both contain' if a.hi_closed else 'both exclude'} {a.hi:g}")


@dataclass(frozen=True)
class EncodingRule:
    column: str
    variable: str
    intervals: tuple
    max_width: float = DEFAULT_MARGIN_MAX    # margin rules only, canvas units

    @property
    def levels(self):
        return len(self.intervals)

    def level(self, value):
        for k, iv in enumerate(self.intervals, start=1):
            if value in iv:
                return k
        raise EncodeError(f"column {self.column!r}: value {value:g} lies outside all intervals")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    shape: str = "sinusoidal"
    fixed: dict = field(default_factory=dict)
    key: str = None
    colormap: str = "viridis"
    glyph_mm: float = None

    @property
    def align_color(self):
        return any(r.variable == "combined_freq" for r in self.rules)


def rule_from_dict(d, index):
    where = f"rule {index}"
    try:
        column, variable = str(d["column"]), str(d["variable"])
    except KeyError as exc:
        raise RuleError(f"{where}: missing {exc.args[0]!r}") from None
    if variable not in VARIABLES:
        raise RuleError(f"{where}: unknown variable {variable!r}; expected one of {VARIABLES}")
    if ("breaks" in d) == ("intervals" in d):
        raise RuleError(f"{where}: give exactly one of 'breaks' or 'intervals'")
    if "breaks" in d:
        b = [float(x) for x in d["breaks"]]
        if len(b) < 1 or any(x >= y for x, y in zip(b, b[1:])):
            raise RuleError(f"{where}: breaks must be strictly increasing")
        ivs = [Interval(x, y) for x, y in zip(b, b[1:])] + [Interval(b[-1], math.inf)]
    else:
        ivs = [parse_interval(t) for t in d["intervals"]]
    if not ivs:
        raise RuleError(f"{where}: no intervals")
    _check_partition(ivs, where)
    return EncodingRule(column, variable, tuple(ivs), float(d.get("max_width", DEFAULT_MARGIN_MAX)))


def ruleset_from_dict(d):
    if not isinstance(d, dict) or "rules" not in d:
        raise RuleError("rules file needs a top-level 'rules' list")
    rules = tuple(rule_from_dict(r, i) for i, r in enumerate(d["rules"]))
    shape = d.get("shape", "sinusoidal")
    if shape not in SHAPES:
        raise RuleError(f"unknown shape {shape!r}")
    fixed = dict(d.get("fixed", {}))
    for k in fixed:
        if k not in VARIABLES:
            raise RuleError(f"fixed: unknown variable {k!r}")
    rs = RuleSet(rules, shape, fixed, d.get("key"), d.get("colormap", "viridis"), d.get("glyph_mm"))
    has_margin = "margin_width" in fixed or any(r.variable == "margin_width" for r in rules)
    if any(r.variable == "inner_color" for r in rules) and not has_margin:
        raise RuleError("an inner_color rule needs a margin (rule or fixed margin_width)")
    return rs


def load_rules(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RuleError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return ruleset_from_dict(d)


def check_levels(ruleset: RuleSet, scaled):
    """Reject rules needing more levels than ``scaled`` (from size transfer) offers."""
    for r in ruleset.rules:
        for var in MODEL_VARIABLES.get(r.variable, ()):
            if r.levels > scaled[var].levels:
                raise RuleError(
                    f"rule {r.column!r} -> {r.variable} has {r.levels} levels but {var} "
                    f"offers {scaled[var].levels} at this glyph size")


def _apply(values, variable, level, rule, ruleset, maps=None):
    if variable in ("geom_freq", "geom_ampl", "color_freq", "color_ampl"):
        values[variable] = level
    elif variable == "combined_freq":
        values["geom_freq"] = values["color_freq"] = level
    elif variable == "combined_ampl":
        values["geom_ampl"] = values["color_ampl"] = level
    elif variable == "margin_width":
        n = rule.levels if rule else 1
        values["margin_width"] = (rule.max_width if rule else DEFAULT_MARGIN_MAX) * level / n
    elif variable == "inner_color":
        n = rule.levels if rule else 1
        t = 0.5 if n == 1 else (level - 1) / (n - 1)
        values["inner_color"] = colormap_linear(ruleset.colormap, t, maps)


def _params(ruleset, levels):
    values = {"geom_freq": 0, "geom_ampl": 0, "color_freq": 0, "color_ampl": 0,
              "margin_width": math.inf, "inner_color": None}
    for var, v in ruleset.fixed.items():
        if var == "margin_width":
            values["margin_width"] = float(v)
        elif var == "inner_color":
            # either a linear RGB triple or a colormap position in [0, 1]
            values["inner_color"] = (colormap_linear(ruleset.colormap, float(v))
                                     if isinstance(v, (int, float)) else tuple(float(c) for c in v))
        else:
            _apply(values, var, int(v), None, ruleset)
    for rule, level in zip(ruleset.rules, levels):
        _apply(values, rule.variable, level, rule, ruleset)
    return GlyphParams(ruleset.shape, values["geom_freq"], values["geom_ampl"],
                       values["color_freq"], values["color_ampl"],
                       values["margin_width"], values["inner_color"])


def record_levels(record, ruleset: RuleSet):
    levels = []
    for rule in ruleset.rules:
        if rule.column not in record or record[rule.column] in (None, ""):
            raise EncodeError(f"record has no value for column {rule.column!r}")
        try:
            value = float(record[rule.column])
        except (TypeError, ValueError):
            raise EncodeError(f"column {rule.column!r}: {record[rule.column]!r} is not numeric") from None
        if math.isnan(value):
            raise EncodeError(f"column {rule.column!r}: value is NaN")
        levels.append(rule.level(value))
    return levels


def encode_record(record, ruleset: RuleSet):
    """Column -> value mapping to :class:`GlyphParams`."""
    return _params(ruleset, record_levels(record, ruleset))


# ----------------------------------------------------------------- output

def _safe(name):
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", str(name)).strip("._")
    return s or "record"


@dataclass(frozen=True)
class LegendEntry:
    rule: int
    column: str
    variable: str
    level: int
    label: str
    path: str


def _render_to(icon, params, model, settings, size_px, path):
    glyph = generate_glyph(icon, params, model, settings)
    img = render_glyph(glyph, size_px)
    img.save(path)
    return img


def glyph_settings(ruleset, base=None):
    s = base or GlyphSettings()
    changes = {"align_color": ruleset.align_color}
    if ruleset.glyph_mm is not None:
        changes["glyph_mm"] = float(ruleset.glyph_mm)
    return replace(s, **changes)


def emit_legend(ruleset: RuleSet, icon, out_dir, model: PerceptualModel = None,
                settings=None, size_px=128, prefix="legend"):
    """One miniature per (rule, level); other rules sit at their middle level."""
    model = model or load_model()
    settings = glyph_settings(ruleset, settings)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    middle = [(r.levels + 1) // 2 for r in ruleset.rules]
    entries = []
    for i, rule in enumerate(ruleset.rules):
        for level in range(1, rule.levels + 1):
            levels = list(middle)
            levels[i] = level
            params = _params(ruleset, levels)
            path = out / f"{prefix}_{i:02d}_{_safe(rule.column)}_{rule.variable}_L{level}.png"
            _render_to(icon, params, model, settings, size_px, path)
            entries.append(LegendEntry(i, rule.column, rule.variable, level,
                                       rule.intervals[level - 1].label, str(path)))
    return entries


MANIFEST_HEADER = ["key", "status", "file", "levels", "params", "error"]


@dataclass
class BatchResult:
    rows: list
    manifest: str

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] != "ok"]


def batch_generate(csv_path, ruleset: RuleSet, icon, out_dir, model: PerceptualModel = None,
                   settings=None, size_px=None):
    """One PNG per CSV record plus ``manifest.csv``; failures are recorded, not raised."""
    model = model or load_model()
    settings = glyph_settings(ruleset, settings)
    check_levels(ruleset, scaled_levels(model, settings.glyph_mm, settings.omega_min,
                                        settings.epsilon_slack))
    size_px = size_px or int(round(max(icon.width, icon.height)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, seen = [], {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EncodeError(f"{csv_path}: empty data file")
        for n, record in enumerate(reader, start=1):
            key = record.get(ruleset.key) if ruleset.key else None
            key = _safe(key) if key else f"record{n:04d}"
            if key in seen:
                seen[key] += 1
                key = f"{key}_{seen[key]}"
            else:
                seen[key] = 0
            row = {"key": key, "status": "ok", "file": "", "levels": "", "params": "", "error": ""}
            try:
                levels = record_levels(record, ruleset)
                params = _params(ruleset, levels)
                row["levels"] = " ".join(map(str, levels))
                row["params"] = json.dumps(params_to_dict(params), sort_keys=True)
                path = out / f"{key}.png"
                _render_to(icon, params, model, settings, size_px, path)
                row["file"] = path.name
            except (EncodeError, ValueError, ArithmeticError) as exc:
                row["status"] = "failed"
                row["error"] = str(exc)
            rows.append(row)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER)
        w.writeheader()
        w.writerows(rows)
    return BatchResult(rows, str(manifest))
