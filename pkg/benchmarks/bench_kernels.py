"""Time the compiled kernels against their numpy twins and check they agree."""

import argparse
import time

import numpy as np

from icon2glyph import _pykernels

try:
    from icon2glyph import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def problems(n, seed):
    rng = np.random.default_rng(seed)
    seeds = rng.random((n, n)) < 0.002
    u = rng.random((n, n))
    rhs = np.zeros((n, n))
    wx = np.ones((n, n - 1))
    wy = np.ones((n - 1, n))
    wx[rng.random(wx.shape) < 0.05] = 0.0
    free = (rng.random((n, n)) > 0.1).astype(np.uint8)
    return seeds.astype(np.uint8), u, rhs, wx, wy, free


def run(n, repeat, seed=0):
    seeds, u, rhs, wx, wy, free = problems(n, seed)
    rows = []
    impls = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for name, mod in impls:
        t_edt = best_of(lambda: mod.edt_features(seeds), repeat)
        d2, _ = mod.edt_features(seeds)
        uu = u.copy()
        t_gs = best_of(lambda: mod.rb_gauss_seidel(uu, rhs, wx, wy, free, 4, False), repeat)
        v = u.copy()
        mod.rb_gauss_seidel(v, rhs, wx, wy, free, 4, False)
        t_res = best_of(lambda: mod.stencil_residual(u, rhs, wx, wy, free), repeat)
        results[name] = (d2, v, mod.stencil_residual(u, rhs, wx, wy, free))
        rows.append((name, t_edt, t_gs, t_res))
    print(f"grid {n}x{n}, best of {repeat}")
    print(f"{'backend':8s} {'edt [s]':>10s} {'4 GS sweeps [s]':>16s} {'residual [s]':>13s}")
    for name, a, b, c in rows:
        print(f"{name:8s} {a:10.4f} {b:16.4f} {c:13.4f}")
    if len(rows) == 2:
        (_, a0, b0, c0), (_, a1, b1, c1) = rows
        print(f"speed-up {'':1s} {a0 / a1:10.1f} {b0 / b1:16.1f} {c0 / c1:13.1f}")
        diffs = [float(np.max(np.abs(x - y))) for x, y in zip(results["numpy"], results["cython"])]
        print("max |numpy - cython|: edt %.3g, gauss-seidel %.3g, residual %.3g" % tuple(diffs))
    else:
        print("compiled extension not available; numpy timings only")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    run(args.size, args.repeat)


if __name__ == "__main__":
    main()
