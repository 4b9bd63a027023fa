"""Raster rendering of diffusion curve images.

Curves fix the colours of the pixels on either side of them; every other
pixel is the solution of the discrete Laplace equation over the pixel grid,
with barrier curves cutting the grid edges they cross. Colours are handled
in linear RGB and sRGB-encoded on output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu
from skimage.draw import polygon2mask

from . import kernels
from .color import BACKGROUND, linear_to_srgb, srgb_to_linear
from .dci import DiffusionCurveImage, polygon_signed_area, validate

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 50
COARSEST = 3000        # direct solve below this many unknowns
SMOOTH_SWEEPS = 2
JACOBI_OMEGA = 0.6


class RenderError(ValueError):
    """The image cannot be rendered (e.g. an open barrier curve)."""


@dataclass
class RasterImage:
    """Linear RGB pixels, shape ``(height, width, 3)``, values in [0, 1]."""

    pixels: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or min(self.pixels.shape[:2]) < 1:
            raise ValueError("pixels must have shape (height, width, 3) with positive size")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def to_srgb8(self):
        return np.round(linear_to_srgb(np.clip(self.pixels, 0.0, 1.0)) * 255.0).astype(np.uint8)

    def save(self, path):
        """Write PNG, or binary PPM when the name ends in ``.ppm``."""
        path = str(path)
        if path.lower().endswith(".ppm"):
            write_ppm(self.to_srgb8(), path)
        else:
            Image.fromarray(self.to_srgb8(), "RGB").save(path)


def write_ppm(rgb8, path):
    h, w, _ = rgb8.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb8, dtype=np.uint8).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def load_image(path):
    """sRGB PNG/PPM -> :class:`RasterImage` (linear)."""
    path = str(path)
    rgb8 = read_ppm(path) if path.lower().endswith(".ppm") else np.asarray(Image.open(path).convert("RGB"))
    return RasterImage(srgb_to_linear(rgb8 / 255.0))


# ------------------------------------------------------------- constraints

@dataclass
class ConstraintMask:
    """Fixed pixel colours and edge weights of the pixel grid.

    ``wx[i, j]`` couples pixel ``(i, j)`` with ``(i, j+1)`` and ``wy[i, j]``
    couples ``(i, j)`` with ``(i+1, j)``; a weight of zero is a blocked edge.
    """

    fixed: np.ndarray
    color: np.ndarray
    wx: np.ndarray
    wy: np.ndarray

    @property
    def shape(self):
        return self.fixed.shape

    @classmethod
    def empty(cls, height, width):
        return cls(np.zeros((height, width), dtype=bool), np.zeros((height, width, 3)),
                   np.ones((height, width - 1)), np.ones((height - 1, width)))

    def blocked_edges(self):
        return int(np.sum(self.wx == 0) + np.sum(self.wy == 0))


def _arc_colors(colors, params, cum):
    """Arc-length positions and RGB of a side's colour points."""
    if not colors:
        return None
    u = np.array([c.u for c in colors])
    rgb = np.array([[c.r, c.g, c.b] for c in colors])
    order = np.argsort(u, kind="stable")
    return np.interp(u[order], params, cum), rgb[order]


def _interp_colors(side, s):
    pos, rgb = side
    return np.column_stack([np.interp(s, pos, rgb[:, k]) for k in range(3)])


def _crossings(P):
    """Crossings of a polyline (pixel coordinates) with the grid's edges.

    Returns ``(seg, t, pa, pb)``: the segment index, its local parameter and
    the two pixels ``(row, col)`` joined by the crossed edge.
    """
    a, b = P[:-1], P[1:]
    out = []
    for axis in (0, 1):       # axis 0: lines X = j (vertical edges), 1: lines Y = i
        fa, fb = np.floor(a[:, axis]), np.floor(b[:, axis])
        seg = np.flatnonzero(fa != fb)
        if len(seg) == 0:
            continue
        line = np.maximum(fa[seg], fb[seg])
        d = b[seg, axis] - a[seg, axis]
        t = (line - a[seg, axis]) / d
        other = a[seg, 1 - axis] + t * (b[seg, 1 - axis] - a[seg, 1 - axis])
        lo = np.floor(other)
        if axis == 0:   # pixel (row, col): rows lo and lo+1 in column `line`
            pa = np.column_stack([lo, line])
            pb = np.column_stack([lo + 1, line])
        else:
            pa = np.column_stack([line, lo])
            pb = np.column_stack([line, lo + 1])
        out.append((seg, t, pa.astype(np.int64), pb.astype(np.int64)))
    if not out:
        e = np.zeros(0, dtype=np.int64)
        return e, np.zeros(0), np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64)
    return tuple(np.concatenate(x) for x in zip(*out))


def rasterize_constraints(dci: DiffusionCurveImage, width, height):
    """Fixed colours and blocked edges for rendering ``dci`` at ``width x height`` pixels."""
    validate(dci)
    H, W = int(height), int(width)
    if H < 1 or W < 1:
        raise ValueError("image dimensions must be positive")
    sx, sy = W / dci.width, H / dci.height
    mask = ConstraintMask.empty(H, W)
    acc = np.zeros((H, W, 3))
    cnt = np.zeros((H, W))
    step = 0.5 / max(sx, sy)

    for index, curve in enumerate(dci.curves):
        pts, params = curve.polyline(step=step)
        P = np.column_stack([pts[:, 0] * sx - 0.5, pts[:, 1] * sy - 0.5])
        seglen = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seglen)])
        seg, t, pa, pb = _crossings(P)
        s = cum[seg] + t * seglen[seg]
        c = P[seg] + t[:, None] * (P[seg + 1] - P[seg])
        tan = P[seg + 1] - P[seg]
        normal = np.column_stack([-tan[:, 1], tan[:, 0]])
        left_a = np.einsum("ij,ij->i", pa[:, ::-1] - c, normal) > 0

        sides = {"left": _arc_colors(curve.colors_left, params, cum),
                 "right": _arc_colors(curve.colors_right, params, cum)}
        allowed = {"left", "right"}
        if curve.barrier:
            if not curve.closed:
                raise RenderError(f"curve {index}: barrier curves must be closed")
            inside = polygon2mask((H, W), P[:, ::-1])
            mask.wx[inside[:, :-1] != inside[:, 1:]] = 0.0
            mask.wy[inside[:-1, :] != inside[1:, :]] = 0.0
            # side membership from the mask, so deposits never leak across
            inner_left = polygon_signed_area(pts) > 0
            ia = _lookup(inside, pa)
            ib = _lookup(inside, pb)
            keep = ia != ib
            left_a = np.where(ia, inner_left, not inner_left)
            if curve.barrier_side != "both":
                allowed = {curve.barrier_side}
        else:
            keep = _odd_crossings(pa, pb, W)

        for name in ("left", "right"):
            side = sides[name]
            if side is None or name not in allowed:
                continue
            rgb = _interp_colors(side, s)
            on_a = left_a if name == "left" else ~left_a
            pix = np.where(on_a[:, None], pa, pb)
            ok = keep & (pix[:, 0] >= 0) & (pix[:, 0] < H) & (pix[:, 1] >= 0) & (pix[:, 1] < W)
            np.add.at(acc, (pix[ok, 0], pix[ok, 1]), rgb[ok])
            np.add.at(cnt, (pix[ok, 0], pix[ok, 1]), 1.0)

    mask.fixed = cnt > 0
    mask.color[mask.fixed] = acc[mask.fixed] / cnt[mask.fixed, None]
    return mask


def _odd_crossings(pa, pb, W):
    """Drop edges a curve crosses an even number of times (near sharp corners)."""
    edge = (pa[:, 0] * W + pa[:, 1]) * 2 + (pb[:, 0] != pa[:, 0])
    _, inv, counts = np.unique(edge, return_inverse=True, return_counts=True)
    return counts[inv] % 2 == 1


def _lookup(img, pix):
    H, W = img.shape
    r = np.clip(pix[:, 0], 0, H - 1)
    c = np.clip(pix[:, 1], 0, W - 1)
    return img[r, c]


# ---------------------------------------------------------------- solver

def _grid_graph(mask):
    H, W = mask.shape
    idx = np.arange(H * W).reshape(H, W)
    ex = mask.wx > 0
    ey = mask.wy > 0
    rows = np.concatenate([idx[:, :-1][ex], idx[:-1, :][ey]])
    cols = np.concatenate([idx[:, 1:][ex], idx[1:, :][ey]])
    w = np.concatenate([mask.wx[ex], mask.wy[ey]])
    return sparse.coo_matrix((w, (rows, cols)), shape=(H * W, H * W)).tocsr()


def _free_operator(mask, free):
    """Sparse Laplacian restricted to the free pixels (fixed ones eliminated)."""
    H, W = mask.shape
    G = _grid_graph(mask)
    G = G + G.T
    deg = np.asarray(G.sum(axis=1)).ravel()
    f = np.flatnonzero(free.ravel())
    A = sparse.diags(deg[f]) - G[f][:, f]
    return A.tocsr()


def _interp_1d(n):
    """Linear interpolation from every second node (``(n+1)//2`` nodes) to ``n``."""
    m = (n + 1) // 2
    rows, cols, vals = [], [], []
    for i in range(n):
        if i % 2 == 0:
            rows.append(i), cols.append(i // 2), vals.append(1.0)
        elif (i + 1) // 2 < m:
            rows += [i, i]
            cols += [(i - 1) // 2, (i + 1) // 2]
            vals += [0.5, 0.5]
        else:
            rows.append(i), cols.append((i - 1) // 2), vals.append(1.0)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, m))


class _Level:
    def __init__(self, A, shape, active):
        self.A = A
        self.shape = shape
        self.active = active            # flat indices of the unknowns in the level's grid
        self.dinv = 1.0 / A.diagonal()
        self.P = None
        self.lu = None


def _hierarchy(A, shape, active):
    levels = [_Level(A, shape, active)]
    while True:
        lv = levels[-1]
        n = lv.A.shape[0]
        h, w = lv.shape
        if n <= COARSEST or min(h, w) < 3:
            lv.lu = splu((lv.A + sparse.diags(np.full(n, 1e-12 * lv.A.diagonal().max()))).tocsc())
            return levels
        full = sparse.kron(_interp_1d(h), _interp_1d(w), format="csr")[lv.active]
        used = np.flatnonzero(np.asarray(abs(full).sum(axis=0)).ravel() > 0)
        P = full[:, used].tocsr()
        lv.P = P
        Ac = (P.T @ lv.A @ P).tocsr()
        levels.append(_Level(Ac, ((h + 1) // 2, (w + 1) // 2), used))


def _vcycle(levels, k, r, fine):
    lv = levels[k]
    if lv.lu is not None:
        return lv.lu.solve(r)
    if k == 0:
        e = fine.smooth(r, reverse=False)
    else:
        e = JACOBI_OMEGA * lv.dinv * r
        for _ in range(SMOOTH_SWEEPS - 1):
            e += JACOBI_OMEGA * lv.dinv * (r - lv.A @ e)
    ec = _vcycle(levels, k + 1, lv.P.T @ (r - lv.A @ e), fine)
    e = e + lv.P @ ec
    if k == 0:
        return fine.smooth(r, reverse=True, start=e)
    for _ in range(SMOOTH_SWEEPS):
        e += JACOBI_OMEGA * lv.dinv * (r - lv.A @ e)
    return e


class _FineSmoother:
    """Red-black Gauss-Seidel on the pixel grid through the compiled kernels."""

    def __init__(self, mask, free):
        self.free = free
        self.free_u8 = np.ascontiguousarray(free, dtype=np.uint8)
        self.wx = np.ascontiguousarray(mask.wx, dtype=np.float64)
        self.wy = np.ascontiguousarray(mask.wy, dtype=np.float64)
        self.shape = free.shape

    def smooth(self, r, reverse, start=None):
        u = np.zeros(self.shape)
        rhs = np.zeros(self.shape)
        rhs[self.free] = r
        if start is not None:
            u[self.free] = start
        kernels.rb_gauss_seidel(u, rhs, self.wx, self.wy, self.free_u8, SMOOTH_SWEEPS, reverse)
        return u[self.free]


def _pcg(A, b, precond, dinv, tol, max_iter):
    """Preconditioned CG; returns the iterate with the smallest scaled residual."""
    x = np.zeros_like(b)
    r = b.copy()
    res = float(np.max(np.abs(r * dinv))) if len(b) else 0.0
    best_x, best_res, it = x.copy(), res, 0
    if res < tol:
        return best_x, best_res, 0
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.max(np.abs(r * dinv)))
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res < tol:
            break
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, best_res, it


def solve_diffusion(mask: ConstraintMask, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                    background=BACKGROUND):
    """Harmonic interpolation of the fixed colours.

    Free pixels that cannot reach any fixed pixel without crossing a blocked
    edge take the background colour. The stopping test is on the residual
    divided by the stencil diagonal (the size of one Jacobi update), in
    colour units.
    """
    H, W = mask.shape
    fixed = mask.fixed.copy()
    color = mask.color.copy()
    if not fixed.any():
        raise RenderError("nothing to diffuse: no fixed pixels")
    G = _grid_graph(mask)
    _, labels = csgraph.connected_components(G, directed=False)
    anchored = np.zeros(labels.max() + 1, dtype=bool)
    anchored[labels[fixed.ravel()]] = True
    lonely = ~anchored[labels].reshape(H, W) & ~fixed
    fixed |= lonely
    color[lonely] = background
    free = ~fixed

    out = color.copy()
    if not free.any():
        return RasterImage(out)
    A = _free_operator(mask, free)
    levels = _hierarchy(A, (H, W), np.flatnonzero(free.ravel()))
    smoother = _FineSmoother(mask, free)
    precond = lambda r: _vcycle(levels, 0, r, smoother)
    dinv = levels[0].dinv
    worst, iters = 0.0, 0
    zeros = np.zeros((H, W))
    fixed_u8 = np.ascontiguousarray(free, dtype=np.uint8)
    for ch in range(3):
        u0 = np.where(fixed, color[..., ch], 0.0)
        b = kernels.stencil_residual(np.ascontiguousarray(u0), zeros, smoother.wx, smoother.wy, fixed_u8)[free]
        x, res, it = _pcg(A, b, precond, dinv, tol, max_iter)
        out[..., ch][free] = x
        worst, iters = max(worst, res), max(iters, it)
    if worst >= tol:
        warnings.warn(f"diffusion solve stopped at residual {worst:.3g} (tol {tol:g})", RuntimeWarning)
    return RasterImage(out, worst, iters)


def render(dci: DiffusionCurveImage, width=None, height=None, tol=DEFAULT_TOL,
           max_iter=DEFAULT_MAX_ITER, background=BACKGROUND):
    """Render at ``width x height`` pixels (default: the canvas size)."""
    if width is None:
        width = int(round(dci.width))
    if height is None:
        height = int(round(width * dci.height / dci.width))
    mask = rasterize_constraints(dci, width, height)
    return solve_diffusion(mask, tol, max_iter, background)


def render_glyph(dci: DiffusionCurveImage, size_px, **kw):
    """Render with the longer canvas side mapped to ``size_px`` pixels."""
    scale = size_px / max(dci.width, dci.height)
    w = max(1, int(round(dci.width * scale)))
    h = max(1, int(round(dci.height * scale)))
    return render(dci, w, h, **kw)
