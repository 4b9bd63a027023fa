"""Seeded synthetic survey data with a known ground truth."""

import math

import numpy as np

from icon2glyph.perception import PERCEIVED_WIDTH, STIMULUS_RANGE, Z75, SurveyRecord

EXPERIMENT_OF = {"geom_ampl": "Ampl1", "geom_freq": "Freq1", "col_ampl": "ColAmpl1", "col_freq": "ColFreq1"}

# ground truth: g(x) = a x^b + c and the response spread giving delta_v
# (level counts sit mid-way between integers, so sampling noise and the
# slight narrowing from outlier removal cannot change them)
TRUTH = {
    "geom_ampl": dict(a=1.1, b=0.9, c=0.2, delta_v=2.84),
    "geom_freq": dict(a=0.8, b=1.1, c=0.5, delta_v=3.65),
    "col_ampl": dict(a=0.9, b=1.0, c=0.1, delta_v=1.52),
    "col_freq": dict(a=1.0, b=0.95, c=0.0, delta_v=2.13),
}


def truth_levels(var):
    return int(math.floor(PERCEIVED_WIDTH[var] / TRUTH[var]["delta_v"]))


def survey(n_per_level=300, seed=0, variables=tuple(TRUTH)):
    """Gaussian responses around g(stimulus); 50 % interval width = delta_v."""
    rng = np.random.default_rng(seed)
    out = []
    for var in variables:
        t = TRUTH[var]
        lo, hi = STIMULUS_RANGE["geom" if var.startswith("geom") else "col"]
        sd = t["delta_v"] / (2 * Z75)
        for v in np.arange(lo, hi + 1):
            mean = t["a"] * v ** t["b"] + t["c"]
            for i, y in enumerate(rng.normal(mean, sd, n_per_level)):
                out.append(SurveyRecord(f"p{i:03d}", EXPERIMENT_OF[var], var, float(v), "ref", float(y)))
    return out


def shape_records(k=0.9, l=0.3, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for exp, var in (("SawtAmpl", "geom_ampl"), ("RectFreq", "geom_freq")):
        for x in np.repeat(np.arange(2.0, 11.0), 10):
            out.append(SurveyRecord("p0", exp, var, float(x), "ref", float(k * x + l + rng.normal(0, noise))))
    return out


def contaminated(levels=9, per_level=200, sd=1.0, fraction=0.05, scale=(0.0, 12.0), seed=0):
    """Rounded responses around integer means with injected gross errors.

    Returns ``(stimuli, responses, injected)``; every injected response sits
    at least four units from its level mean and inside ``scale``.
    """
    rng = np.random.default_rng(seed)
    x = np.repeat(np.arange(2.0, 2.0 + levels), per_level)
    mean = x + 1.0
    y = np.clip(np.round(rng.normal(mean, sd)), *scale)
    injected = np.zeros(len(y), dtype=bool)
    idx = rng.choice(len(y), int(round(fraction * len(y))), replace=False)
    injected[idx] = True
    for i in idx:
        room = {+1: scale[1] - mean[i], -1: mean[i] - scale[0]}
        sides = [d for d, r in room.items() if r >= 4.0]
        d = sides[rng.integers(len(sides))]
        y[i] = mean[i] + d * np.floor(rng.uniform(4.0, min(7.0, room[d]) + 1.0 - 1e-9))
    return x, y, injected
