"""Freeze reference glyph renders in tests/fixtures/goldens.

Writes one PNG per case plus cases.json describing how each was made. Only
rerun this after an intended change to the rendered output.
"""

import argparse
import json
from importlib import resources
from pathlib import Path

from icon2glyph import load_dci
from icon2glyph.dci import params_from_dict
from icon2glyph.pipeline import generate_glyph
from icon2glyph.render import render_glyph

CASES = {
    "circle_plain": ("circle", {}),
    "heart_sin_f3a2": ("heart", {"geom_freq": 3, "geom_ampl": 2}),
    "virus_rect_f2a3": ("virus", {"shape": "rectangular", "geom_freq": 2, "geom_ampl": 3}),
    "circle_color_f2a4": ("circle", {"color_freq": 2, "color_ampl": 4}),
    "heart_margin_inner": ("heart", {"geom_freq": 1, "geom_ampl": 1, "margin_width": 60,
                                     "inner_color": [0.9, 0.6, 0.1]}),
    "ring_saw_f4a1": ("ring", {"shape": "sawtooth", "geom_freq": 4, "geom_ampl": 1}),
}
SIZE = 128


def icon(name):
    return load_dci(Path(str(resources.files("icon2glyph").joinpath(f"data/icons/{name}.dci"))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/fixtures/goldens"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, (icon_name, params) in CASES.items():
        glyph = generate_glyph(icon(icon_name), params_from_dict(params))
        render_glyph(glyph, SIZE).save(out / f"{name}.png")
        manifest[name] = {"icon": icon_name, "params": params, "size": SIZE}
        print(out / f"{name}.png")
    (out / "cases.json").write_text(json.dumps(manifest, indent=1) + "\n")


if __name__ == "__main__":
    main()
