"""Perceptual model: survey processing, transfer fits, quantisation, size transfer.

Variables are named ``geom_ampl``, ``geom_freq``, ``col_ampl`` and
``col_freq``. Stimuli are measured in mm (geometric amplitude, period
lengths) or luminance (colour amplitude) at the 50 mm reference glyph; the
survey scale is the arbitrary digital unit (adu).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import optimize, stats

VARIABLES = ("geom_ampl", "geom_freq", "col_ampl", "col_freq")
P1, P2 = 0.375, 0.175
Z75 = 0.6744897501960817   # 75 % quantile of the standard normal
REFERENCE_MM = 50.0
MODEL_VERSION = 1

EXPERIMENTS = {
    "Ampl1": "geom_ampl", "Ampl2": "geom_ampl",
    "Freq1": "geom_freq", "Freq2": "geom_freq",
    "ColAmpl1": "col_ampl", "ColAmpl2": "col_ampl",
    "ColFreq1": "col_freq", "ColFreq2": "col_freq",
}
SHAPE_EXPERIMENTS = {
    "SawtAmpl": ("sawtooth", "ampl"), "RectAmpl": ("rectangular", "ampl"),
    "SawtFreq": ("sawtooth", "freq"), "RectFreq": ("rectangular", "freq"),
}
# stimulus range shown in each experiment kind, in adu
STIMULUS_RANGE = {"geom": (2.0, 10.0), "col": (1.0, 5.0)}
PERCEIVED_WIDTH = {"geom_ampl": 12.0, "geom_freq": 12.0, "col_ampl": 5.0, "col_freq": 5.0}


class ModelError(ValueError):
    """Invalid survey data or an unusable model."""


class NotQuantizable(ModelError):
    """The quantisation step is not smaller than the perceived range."""


# ------------------------------------------------------------ stimulus map

@dataclass(frozen=True)
class Anchor:
    v_min: float
    s_at_min: float
    v_max: float
    s_at_max: float


DEFAULT_ANCHORS = {
    "geom_ampl": Anchor(1.0, 0.1, 12.0, 1.2),
    "geom_freq": Anchor(1.0, 5.1, 12.0, 0.8),    # period length, mm
    "col_freq": Anchor(1.0, 12.1, 5.0, 5.9),     # period length, mm
    "col_ampl": Anchor(1.0, 0.425, 5.0, 0.85),   # luminance
}


@dataclass(frozen=True)
class StimulusMap:
    """Linear adu <-> stimulus map between the two anchors of each variable."""

    anchors: dict = field(default_factory=lambda: dict(DEFAULT_ANCHORS))

    def _anchor(self, variable):
        try:
            return self.anchors[variable]
        except KeyError:
            raise ModelError(f"unknown variable {variable!r}") from None

    def adu_to_stimulus(self, variable, v, extrapolate=False):
        a = self._anchor(variable)
        v = float(v)
        if not extrapolate and not (a.v_min - 1e-12 <= v <= a.v_max + 1e-12):
            raise ModelError(f"{variable} value {v} outside [{a.v_min}, {a.v_max}] adu")
        t = (v - a.v_min) / (a.v_max - a.v_min)
        return a.s_at_min * (1.0 - t) + a.s_at_max * t

    def stimulus_to_adu(self, variable, s, extrapolate=False):
        a = self._anchor(variable)
        t = (float(s) - a.s_at_min) / (a.s_at_max - a.s_at_min)
        if not extrapolate and not (-1e-12 <= t <= 1.0 + 1e-12):
            raise ModelError(f"{variable} stimulus {s} outside the anchored range")
        return a.v_min * (1.0 - t) + a.v_max * t


DEFAULT_STIMULUS_MAP = StimulusMap()


# --------------------------------------------------------- outlier removal

def _chebyshev_group(y, p1, p2):
    out = np.zeros(len(y), dtype=bool)
    if len(y) < 3:
        return out
    m, s = y.mean(), y.std(ddof=1)
    if s == 0:
        return out
    kept = y[np.abs(y - m) <= math.sqrt(1.0 / p1) * s]
    if len(kept) < 2:
        return out
    m2, s2 = kept.mean(), kept.std(ddof=1)
    return np.abs(y - m2) > math.sqrt(1.0 / p2) * s2


def chebyshev_filter(stimuli, responses, p1=P1, p2=P2):
    """Two-step Chebyshev outlier detection per stimulus level.

    A first pass with ``k1 = sqrt(1/p1)`` standard deviations drops gross
    outliers; mean and deviation of what remains set the final bounds at
    ``k2 = sqrt(1/p2)``, which are applied to every response of the level.
    Returns boolean masks ``(kept, outliers)``.
    """
    if not (0 < p2 <= p1 < 1):
        raise ValueError("need 0 < p2 <= p1 < 1")
    x = np.asarray(stimuli, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    outliers = np.zeros(len(y), dtype=bool)
    for level in np.unique(x):
        sel = np.flatnonzero(x == level)
        outliers[sel] = _chebyshev_group(y[sel], p1, p2)
    return ~outliers, outliers


# -------------------------------------------------------- transfer fit

@dataclass(frozen=True)
class TransferFit:
    """Stimulus-to-perception power law ``g(x) = a * x**b + c``."""

    a: float
    b: float
    c: float
    domain: tuple = (1.0, 12.0)
    residual: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * np.power(np.maximum(x, 0.0), self.b) + self.c

    def inverse(self, y):
        z = (np.asarray(y, dtype=np.float64) - self.c) / self.a
        return np.power(np.maximum(z, 0.0), 1.0 / self.b)


IDENTITY_TRANSFER = TransferFit(1.0, 1.0, 0.0)


def fit_transfer(stimuli, responses, domain=None):
    """Least-squares fit of ``a * x**b + c``, best of three starting exponents."""
    x = np.asarray(stimuli, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    if len(np.unique(x)) < 5:
        raise ModelError("power-law fit needs at least five distinct stimulus levels")
    if np.any(x <= 0):
        raise ModelError("stimuli must be positive for a power-law fit")

    def resid(p):
        return p[0] * np.power(x, p[1]) + p[2] - y

    def jac(p):
        xb = np.power(x, p[1])
        return np.column_stack([xb, p[0] * xb * np.log(x), np.ones_like(x)])

    best, diagnostics = None, []
    lo, hi = x.min(), x.max()
    for b0 in (0.5, 1.0, 2.0):
        span = hi**b0 - lo**b0
        a0 = (y.max() - y.min()) / span if span > 0 else 1.0
        a0 = a0 if a0 > 0 else 1.0
        c0 = y.min() - a0 * lo**b0
        try:
            r = optimize.least_squares(resid, [a0, b0, c0], jac=jac, method="lm",
                                       xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        except (ValueError, FloatingPointError) as exc:
            diagnostics.append(f"b0={b0}: {exc}")
            continue
        diagnostics.append(f"b0={b0}: cost={r.cost:.3g} status={r.status}")
        if np.all(np.isfinite(r.x)) and (best is None or r.cost < best.cost):
            best = r
    if best is None:
        raise ModelError("power-law fit failed from every start: " + "; ".join(diagnostics))
    a, b, c = (float(v) for v in best.x)
    rms = float(np.sqrt(np.mean(best.fun**2)))
    return TransferFit(a, b, c, tuple(domain or (float(lo), float(hi))), rms)


# ------------------------------------------------- level distributions

@dataclass(frozen=True)
class LevelFit:
    model: str                 # "gaussian" or "mixture2"
    means: tuple
    sds: tuple
    weights: tuple
    ci_low: float
    ci_high: float

    @property
    def width(self):
        return self.ci_high - self.ci_low

    @property
    def half_width(self):
        return 0.5 * self.width

    def cdf(self, y):
        return sum(w * stats.norm.cdf(y, m, s) for w, m, s in zip(self.weights, self.means, self.sds))


def _normal_pdf(y, mu, sd):
    z = (y - mu) / sd
    return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))


def _em_mixture(y, rng, sd_floor, restarts=50, iters=300, patience=8):
    """Best EM run over random restarts; stops after ``patience`` runs without gain."""
    n = len(y)
    best = None
    stale = 0
    for r in range(restarts):
        if stale >= patience:
            break
        if r == 0:
            split = np.median(y)
            lo, hi = y[y <= split], y[y > split]
            if len(hi) == 0:
                continue
            mu = np.array([lo.mean(), hi.mean()])
        else:
            mu = rng.choice(y, 2, replace=False).astype(float)
            if mu[0] == mu[1]:
                continue
        sd = np.full(2, max(y.std(), sd_floor))
        w = np.array([0.5, 0.5])
        ll_old = -np.inf
        for _ in range(iters):
            dens = w * _normal_pdf(y[:, None], mu, sd)
            tot = dens.sum(axis=1)
            tot = np.where(tot > 0, tot, 1e-300)
            ll = float(np.sum(np.log(tot)))
            g = dens / tot[:, None]
            nk = g.sum(axis=0)
            if np.any(nk < 1e-9):
                break
            w = nk / n
            mu = (g * y[:, None]).sum(axis=0) / nk
            sd = np.sqrt((g * (y[:, None] - mu) ** 2).sum(axis=0) / nk)
            sd = np.maximum(sd, sd_floor)
            if ll - ll_old < 1e-8 * max(1.0, abs(ll)):
                break
            ll_old = ll
        dens = w * _normal_pdf(y[:, None], mu, sd)
        ll = float(np.sum(np.log(np.maximum(dens.sum(axis=1), 1e-300))))
        if best is None or ll > best[0] + 1e-6 * abs(best[0]):
            best = (ll, w.copy(), mu.copy(), sd.copy())
            stale = 0
        else:
            stale += 1
    return best


def _mixture_quantile(w, mu, sd, q):
    f = lambda t: float(np.sum(w * stats.norm.cdf(t, mu, sd))) - q
    lo = float(np.min(mu - 10 * sd))
    hi = float(np.max(mu + 10 * sd))
    return optimize.brentq(f, lo, hi, xtol=1e-12)


def fit_level_distribution(responses, resolution=0.0, seed=0, min_weight=0.05, restarts=50):
    """Gaussian or two-component mixture for the responses to one stimulus.

    Both models are fitted (the mixture by EM with restarts) and the one
    with the lower BIC is kept. The 50 % interval is ``mean +/- 0.67449 sd``
    for the Gaussian and the 25 %..75 % quantile range of the mixture CDF
    otherwise. ``resolution`` is the response grid spacing; it sets a floor
    on component deviations so discrete answers cannot collapse a component.
    """
    y = np.asarray(responses, dtype=np.float64)
    if len(y) < 10:
        raise ModelError("a level distribution needs at least ten responses")
    mu, sd = float(y.mean()), float(y.std())
    gauss = LevelFit("gaussian", (mu,), (sd,), (1.0,), mu - Z75 * sd, mu + Z75 * sd)
    if sd == 0:
        return gauss
    n = len(y)
    ll_g = float(np.sum(stats.norm.logpdf(y, mu, sd)))
    bic_g = -2 * ll_g + 2 * math.log(n)
    floor = max(0.1 * sd, resolution / math.sqrt(12.0))
    rng = np.random.default_rng(seed)
    best = _em_mixture(y, rng, floor, restarts=restarts)
    if best is None:
        return gauss
    ll_m, w, m, s = best
    bic_m = -2 * ll_m + 5 * math.log(n)
    if bic_m >= bic_g or w.min() < min_weight:
        return gauss
    q25 = _mixture_quantile(w, m, s, 0.25)
    q75 = _mixture_quantile(w, m, s, 0.75)
    order = np.argsort(m)
    return LevelFit("mixture2", tuple(m[order]), tuple(s[order]), tuple(w[order]), q25, q75)


# ------------------------------------------------------------ quantisation

@dataclass(frozen=True)
class Quantization:
    delta_v: float
    perceived_width: float
    levels: int
    level_fits: tuple = ()


def quantize(ci_widths, perceived_width):
    """Quantisation step = widest 50 % interval; ``floor(W / step)`` levels."""
    fits = tuple(ci_widths)
    widths = [f.width if isinstance(f, LevelFit) else float(f) for f in fits]
    if len(widths) < 2:
        raise ModelError("quantisation needs at least two stimulus levels")
    dv = float(max(widths))
    W = float(perceived_width)
    if dv >= W:
        raise NotQuantizable(f"variable not quantizable at this size (step {dv:.3g} >= range {W:.3g})")
    if dv <= 0:
        raise ModelError("all confidence intervals are empty")
    levels = int(math.floor(W / dv + 1e-12))
    return Quantization(dv, W, levels, tuple(f for f in fits if isinstance(f, LevelFit)))


# ------------------------------------------------------ shape calibration

@dataclass(frozen=True)
class ShapeCalibration:
    shape: str
    variable: str   # "ampl" or "freq"
    k: float = 1.0
    l: float = 0.0

    def __call__(self, x):
        return self.k * np.asarray(x, dtype=np.float64) + self.l


def fit_shape_calibration(reference, selected, shape, variable):
    """Least-squares line from sinusoidal magnitudes to matched shape magnitudes."""
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(selected, dtype=np.float64)
    if len(np.unique(x)) < 3:
        raise ModelError("shape calibration needs at least three distinct reference magnitudes")
    A = np.column_stack([x, np.ones_like(x)])
    (k, l), *_ = np.linalg.lstsq(A, y, rcond=None)
    if k <= 0:
        raise ModelError(f"shape calibration slope {k:.3g} is not positive")
    return ShapeCalibration(shape, variable, float(k), float(l))


# ------------------------------------------------------------------ model

@dataclass(frozen=True)
class VariableModel:
    transfer: TransferFit
    quant: Quantization
    omega_min: float = 0.558
    epsilon_slack: float = 0.0
    outliers: int = 0
    records: int = 0


DEFAULT_SLACK = {"geom_ampl": 0.34, "geom_freq": 0.11, "col_freq": 0.11, "col_ampl": 0.0}
DEFAULT_OMEGA_MIN = 0.558


@dataclass(frozen=True)
class PerceptualModel:
    variables: dict
    shape_calibrations: dict = field(default_factory=dict)
    stimulus_map: StimulusMap = DEFAULT_STIMULUS_MAP
    reference_mm: float = REFERENCE_MM

    def levels(self, variable):
        return self.variables[variable].quant.levels

    def calibration(self, shape, kind):
        if shape == "sinusoidal":
            return ShapeCalibration(shape, kind)
        return self.shape_calibrations.get((shape, kind), ShapeCalibration(shape, kind))


def _var_to_json(v: VariableModel):
    return {
        "transfer": {"a": v.transfer.a, "b": v.transfer.b, "c": v.transfer.c,
                     "domain": list(v.transfer.domain), "residual": v.transfer.residual},
        "delta_v": v.quant.delta_v,
        "perceived_width": v.quant.perceived_width,
        "levels": v.quant.levels,
        "omega_min": v.omega_min,
        "epsilon_slack": v.epsilon_slack,
        "outliers": v.outliers,
        "records": v.records,
    }


def model_to_dict(model: PerceptualModel):
    return {
        "version": MODEL_VERSION,
        "reference_mm": model.reference_mm,
        "variables": {k: _var_to_json(v) for k, v in model.variables.items()},
        "shape_calibration": [asdict(c) for c in model.shape_calibrations.values()],
        "stimulus_map": {k: asdict(a) for k, a in model.stimulus_map.anchors.items()},
    }


def model_from_dict(d):
    if d.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {d.get('version')!r}")
    try:
        variables = {}
        for name, v in d["variables"].items():
            t = v["transfer"]
            variables[name] = VariableModel(
                TransferFit(t["a"], t["b"], t["c"], tuple(t.get("domain", (1.0, 12.0))),
                            t.get("residual", 0.0)),
                Quantization(v["delta_v"], v["perceived_width"], int(v["levels"])),
                v.get("omega_min", DEFAULT_OMEGA_MIN),
                v.get("epsilon_slack", DEFAULT_SLACK.get(name, 0.0)),
                v.get("outliers", 0), v.get("records", 0),
            )
        cals = {}
        for c in d.get("shape_calibration", []):
            cal = ShapeCalibration(**c)
            cals[(cal.shape, cal.variable)] = cal
        anchors = dict(DEFAULT_ANCHORS)
        for k, a in d.get("stimulus_map", {}).items():
            anchors[k] = Anchor(**a)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model file: {exc}") from None
    return PerceptualModel(variables, cals, StimulusMap(anchors), d.get("reference_mm", REFERENCE_MM))


def load_model(path=None):
    """Load a model file; ``None`` gives the shipped default model."""
    if path is None:
        text = resources.files("icon2glyph").joinpath("data/default_model.json").read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        return model_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


# ------------------------------------------------------------- survey data

@dataclass(frozen=True)
class SurveyRecord:
    participant: str
    experiment: str
    variable: str
    stimulus: float
    second_stimulus: object
    response: float


SURVEY_HEADER = ["participant", "experiment", "variable", "stimulus", "second_stimulus", "response"]


def read_survey(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ModelError(f"{path}: empty survey file")
        missing = set(SURVEY_HEADER) - set(reader.fieldnames)
        if missing:
            raise ModelError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            exp = row["experiment"]
            if exp not in EXPERIMENTS and exp not in SHAPE_EXPERIMENTS:
                raise ModelError(f"{path}:{line}: unknown experiment {exp!r}")
            try:
                stim, resp = float(row["stimulus"]), float(row["response"])
            except ValueError:
                raise ModelError(f"{path}:{line}: stimulus/response must be numeric") from None
            second = row["second_stimulus"]
            try:
                second = float(second)
            except ValueError:
                pass
            records.append(SurveyRecord(row["participant"], exp, row["variable"], stim, second, resp))
    if not records:
        raise ModelError(f"{path}: no survey records")
    return records


def write_survey(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SURVEY_HEADER)
        for r in records:
            w.writerow([r.participant, r.experiment, r.variable, repr(r.stimulus),
                        r.second_stimulus if isinstance(r.second_stimulus, str) else repr(r.second_stimulus),
                        repr(r.response)])


@dataclass
class BuildReport:
    lines: list = field(default_factory=list)

    def add(self, text):
        self.lines.append(text)

    def __str__(self):
        return "\n".join(self.lines)


def build_model(records, p1=P1, p2=P2, resolution=1.0, base=None):
    """Survey records -> :class:`PerceptualModel` (plus a text report).

    Per variable: outlier filter, power-law fit, per-level distributions,
    quantisation. Shape-matching experiments give the calibration lines.
    Variables absent from the survey are taken from ``base`` (default: the
    shipped model).
    """
    if not records:
        raise ModelError("no survey records")
    base = base or load_model()
    report = BuildReport()
    variables = dict(base.variables)
    cals = dict(base.shape_calibrations)
    for var in VARIABLES:
        rs = [r for r in records if EXPERIMENTS.get(r.experiment) == var]
        if not rs:
            continue
        x = np.array([r.stimulus for r in rs])
        y = np.array([r.response for r in rs])
        kept, out = chebyshev_filter(x, y, p1, p2)
        transfer = fit_transfer(x[kept], y[kept])
        fits = [fit_level_distribution(y[kept & (x == lv)], resolution=resolution)
                for lv in np.unique(x) if np.sum(kept & (x == lv)) >= 10]
        q = quantize(fits, PERCEIVED_WIDTH[var])
        prev = base.variables.get(var)
        variables[var] = VariableModel(
            transfer, q,
            prev.omega_min if prev else DEFAULT_OMEGA_MIN,
            prev.epsilon_slack if prev else DEFAULT_SLACK[var],
            int(out.sum()), len(rs),
        )
        report.add(
            f"{var}: {len(rs)} records, {int(out.sum())} outliers "
            f"({100.0 * out.mean():.1f}%), g(x) = {transfer.a:.4g}*x^{transfer.b:.4g} "
            f"+ {transfer.c:.4g} (rms {transfer.residual:.3g}), "
            f"dv = {q.delta_v:.3f} adu, levels = {q.levels}"
        )
    for exp, (shape, kind) in SHAPE_EXPERIMENTS.items():
        rs = [r for r in records if r.experiment == exp]
        if not rs:
            continue
        cal = fit_shape_calibration([r.stimulus for r in rs], [r.response for r in rs], shape, kind)
        cals[(shape, kind)] = cal
        report.add(f"{shape} {kind}: h(x) = {cal.k:.4g}*x + {cal.l:.4g} ({len(rs)} records)")
    return PerceptualModel(variables, cals, base.stimulus_map, base.reference_mm), report


def describe_model(model):
    lines = []
    for var in VARIABLES:
        if var in model.variables:
            v = model.variables[var]
            t = v.transfer
            lines.append(
                f"{var}: dv = {v.quant.delta_v:.2f} adu, perceived width = {v.quant.perceived_width:g}, "
                f"levels = {v.quant.levels}, g(x) = {t.a:.4g}*x^{t.b:.4g} + {t.c:.4g}")
    for (shape, kind), c in sorted(model.shape_calibrations.items()):
        lines.append(f"{shape} {kind}: h(x) = {c.k:.4g}*x + {c.l:.4g}")
    return "\n".join(lines)


# ----------------------------------------------------------- size transfer

@dataclass(frozen=True)
class SizeTransfer:
    omega: float
    omega_min: float
    omega_max: float
    epsilon_slack: float = 0.0

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if self.omega_min < self.omega - 1e-12:
            raise ValueError("omega_min must not be below omega")
        if not (self.omega - 1e-12 <= self.omega_max <= 1 + 1e-12):
            raise ValueError("omega_max must lie in [omega, 1]")


@dataclass(frozen=True)
class ScaledVariable:
    variable: str
    levels: int
    delta_v: float
    perceived_width: float
    adu_range: tuple          # usable stimulus range, adu (50 mm reference scale)
    perceived_range: tuple    # g applied to adu_range
    omega: float = 1.0

    def level_adu(self, level, transfer):
        """Stimulus (adu) of quantised level ``level`` in 1..levels."""
        if not 1 <= level <= self.levels:
            raise ModelError(f"{self.variable} level {level} outside 1..{self.levels}")
        lo, hi = self.perceived_range
        span = abs(hi - lo)
        step = self.delta_v if self.levels < 2 else min(self.delta_v, span / (self.levels - 1))
        mid = 0.5 * (lo + hi)
        sgn = 1.0 if hi >= lo else -1.0
        y = mid + sgn * (level - 0.5 * (self.levels + 1)) * step
        return float(transfer.inverse(y))


def size_transfer(model: PerceptualModel, omega, omega_min=None, epsilon_slack=None, variables=VARIABLES):
    """Level sets of the model rescaled to a glyph ``omega`` times the reference size.

    Colour amplitude is size independent. For every other variable the
    stimulus range ``[s_min, s_max]`` becomes ``[omega_min*s_min,
    omega_max*s_max]`` with ``omega_max = omega + epsilon_slack`` (capped at
    one), the step ``dv`` is kept, and the perceived width shrinks by the
    change of the usable perceived span. The level count never grows.
    """
    out = {}
    smap = model.stimulus_map
    for var in variables:
        vm = model.variables[var]
        q = vm.quant
        a = smap.anchors[var]
        lo_adu, hi_adu = a.v_min, a.v_max
        g = vm.transfer
        if var == "col_ampl" or omega >= 1.0:
            out[var] = ScaledVariable(var, q.levels, q.delta_v, q.perceived_width,
                                      (lo_adu, hi_adu), (float(g(lo_adu)), float(g(hi_adu))), 1.0)
            continue
        w_min = vm.omega_min if omega_min is None else omega_min
        w_min = min(max(w_min, omega), 1.0)
        slack = vm.epsilon_slack if epsilon_slack is None else epsilon_slack
        w_max = min(omega + slack, 1.0)
        SizeTransfer(omega, w_min, w_max, slack)
        x_lo = smap.stimulus_to_adu(var, w_min * a.s_at_min, extrapolate=True)
        x_hi = smap.stimulus_to_adu(var, w_max * a.s_at_max, extrapolate=True)
        x_lo = max(x_lo, 1e-9)
        x_hi = max(x_hi, 1e-9)
        span_full = float(g(hi_adu) - g(lo_adu))
        span_new = abs(float(g(x_hi) - g(x_lo)))
        W = q.perceived_width - span_full + span_new
        if W <= q.delta_v:
            warnings.warn(f"{var} disabled at scale {omega:.3g}: usable range below one step", RuntimeWarning)
            levels = 0
        else:
            levels = min(q.levels, int(math.floor(W / q.delta_v + 1e-12)))
        out[var] = ScaledVariable(var, levels, q.delta_v, W, (x_lo, x_hi),
                                  (float(g(x_lo)), float(g(x_hi))), omega)
    return out


def level_to_stimulus(model, scaled: ScaledVariable, level, shape="sinusoidal"):
    """Physical stimulus (mm or luminance) for a quantised level.

    Rectangular and sawtooth waves go through the shape calibration so they
    read like the sinusoid of the same level.
    """
    var = scaled.variable
    x = scaled.level_adu(level, model.variables[var].transfer)
    if var in ("geom_ampl", "geom_freq") and shape != "sinusoidal":
        kind = "ampl" if var == "geom_ampl" else "freq"
        x = float(model.calibration(shape, kind)(x))
    s = model.stimulus_map.adu_to_stimulus(var, x, extrapolate=True)
    if var == "col_ampl":
        return float(min(max(s, 0.0), 1.0))
    return float(max(s, 1e-6))


def default_model():
    return load_model()


def with_slack(model, **changes):
    """Copy of ``model`` with per-variable ``omega_min``/``epsilon_slack`` replaced."""
    vs = {k: replace(v, **changes) for k, v in model.variables.items()}
    return replace(model, variables=vs)
