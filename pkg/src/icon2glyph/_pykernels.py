"""Numpy implementations of the compiled kernels in ``_ckernels.pyx``.

Selected automatically when the extension is not built, or forced with
``ICON2GLYPH_PURE=1``.
"""

import numpy as np


def edt_features(seeds):
    seeds = np.ascontiguousarray(seeds, dtype=bool)
    H, W = seeds.shape
    rows = np.arange(H)[:, None]

    above = np.where(seeds, rows, -1)
    above = np.maximum.accumulate(above, axis=0)
    below = np.where(seeds, rows, H + W + 1)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]
    big = H + W + 1
    use_below = (below < big) & ((above < 0) | (below - rows < rows - above))
    row_of = np.where(use_below, below, above)
    g = np.where(row_of >= 0, (rows - row_of).astype(np.float64) ** 2, np.inf)

    d2 = np.empty((H, W))
    arg = np.empty((H, W), dtype=np.int64)
    cols = np.arange(W)
    sq = (cols[:, None] - cols[None, :]).astype(np.float64) ** 2   # (j, k)
    chunk = max(1, 2_000_000 // (W * W))
    for i0 in range(0, H, chunk):
        block = g[i0:i0 + chunk]                                     # (c, k)
        cost = block[:, None, :] + sq[None, :, :]                    # (c, j, k)
        a = np.argmin(cost, axis=2)
        arg[i0:i0 + chunk] = a
        d2[i0:i0 + chunk] = np.take_along_axis(cost, a[..., None], axis=2)[..., 0]

    feat = np.take_along_axis(row_of, arg, axis=1) * W + arg
    feat[~np.isfinite(d2)] = -1
    return d2, feat


def _neighbour_sums(u, rhs, wx, wy):
    num = rhs.copy()
    den = np.zeros_like(u)
    num[:, 1:] += wx * u[:, :-1]
    den[:, 1:] += wx
    num[:, :-1] += wx * u[:, 1:]
    den[:, :-1] += wx
    num[1:, :] += wy * u[:-1, :]
    den[1:, :] += wy
    num[:-1, :] += wy * u[1:, :]
    den[:-1, :] += wy
    return num, den


def rb_gauss_seidel(u, rhs, wx, wy, free, sweeps, reverse):
    H, W = u.shape
    parity = (np.arange(H)[:, None] + np.arange(W)[None, :]) & 1
    free = free.astype(bool)
    order = (1, 0) if reverse else (0, 1)
    for _ in range(sweeps):
        for colour in order:
            num, den = _neighbour_sums(u, rhs, wx, wy)
            sel = free & (parity == colour) & (den > 0)
            u[sel] = num[sel] / den[sel]


def stencil_residual(u, rhs, wx, wy, free):
    out = rhs.copy()
    out[:, 1:] -= wx * (u[:, 1:] - u[:, :-1])
    out[:, :-1] -= wx * (u[:, :-1] - u[:, 1:])
    out[1:, :] -= wy * (u[1:, :] - u[:-1, :])
    out[:-1, :] -= wy * (u[:-1, :] - u[1:, :])
    out[~free.astype(bool)] = 0.0
    return out
