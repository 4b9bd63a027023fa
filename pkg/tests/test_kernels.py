import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from icon2glyph import _pykernels, kernels

try:
    from icon2glyph import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels else [])
needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def grid_problem(rng, H, W, p_block=0.05, p_fixed=0.1):
    u = rng.random((H, W))
    rhs = rng.normal(scale=0.1, size=(H, W))
    wx = np.ones((H, W - 1))
    wy = np.ones((H - 1, W))
    wx[rng.random(wx.shape) < p_block] = 0.0
    wy[rng.random(wy.shape) < p_block] = 0.0
    free = (rng.random((H, W)) > p_fixed).astype(np.uint8)
    return u, rhs, wx, wy, free


@pytest.mark.parametrize("mod", BACKENDS)
@given(seed=st.integers(0, 10_000), H=st.integers(1, 40), W=st.integers(1, 40),
       density=st.sampled_from([0.0, 0.01, 0.1, 0.5]))
def test_edt_matches_scipy(mod, seed, H, W, density):
    rng = np.random.default_rng(seed)
    seeds = rng.random((H, W)) < density
    if not seeds.any():
        seeds[rng.integers(H), rng.integers(W)] = True
    d2, feat = mod.edt_features(seeds.astype(np.uint8))
    ref = ndimage.distance_transform_edt(~seeds)
    assert np.allclose(np.sqrt(d2), ref, atol=1e-12)
    # the reported feature is a seed at exactly that distance
    fy, fx = np.divmod(feat, W)
    assert np.all(seeds[fy, fx])
    yy, xx = np.mgrid[:H, :W]
    assert np.allclose((yy - fy) ** 2 + (xx - fx) ** 2, d2)


@pytest.mark.parametrize("mod", BACKENDS)
def test_edt_without_seeds(mod):
    d2, feat = mod.edt_features(np.zeros((5, 7), dtype=np.uint8))
    assert np.all(np.isinf(d2)) and np.all(feat == -1)


@needs_ext
@given(seed=st.integers(0, 10_000), H=st.integers(2, 30), W=st.integers(2, 30),
       sweeps=st.integers(1, 3), reverse=st.booleans())
def test_backends_agree(seed, H, W, sweeps, reverse):
    rng = np.random.default_rng(seed)
    u, rhs, wx, wy, free = grid_problem(rng, H, W)
    seeds = (rng.random((H, W)) < 0.05).astype(np.uint8)
    seeds[0, 0] = 1
    a = _pykernels.edt_features(seeds)
    b = _ckernels.edt_features(seeds)
    assert np.array_equal(a[0], b[0])
    ua, ub = u.copy(), u.copy()
    _pykernels.rb_gauss_seidel(ua, rhs, wx, wy, free, sweeps, reverse)
    _ckernels.rb_gauss_seidel(ub, rhs, wx, wy, free, sweeps, reverse)
    assert np.allclose(ua, ub, rtol=0, atol=1e-13)
    ra = _pykernels.stencil_residual(u, rhs, wx, wy, free)
    rb = _ckernels.stencil_residual(u, rhs, wx, wy, free)
    assert np.allclose(ra, rb, rtol=0, atol=1e-13)


@pytest.mark.parametrize("mod", BACKENDS)
def test_gauss_seidel_reduces_residual(mod):
    rng = np.random.default_rng(0)
    u, rhs, wx, wy, free = grid_problem(rng, 24, 24, p_block=0.0)
    rhs[:] = 0.0
    r0 = np.abs(mod.stencil_residual(u, rhs, wx, wy, free)).max()
    mod.rb_gauss_seidel(u, rhs, wx, wy, free, 20, False)
    r1 = np.abs(mod.stencil_residual(u, rhs, wx, wy, free)).max()
    assert r1 < 0.5 * r0


@pytest.mark.parametrize("mod", BACKENDS)
def test_fixed_pixels_untouched(mod):
    rng = np.random.default_rng(1)
    u, rhs, wx, wy, free = grid_problem(rng, 16, 16)
    before = u.copy()
    mod.rb_gauss_seidel(u, rhs, wx, wy, free, 2, True)
    assert np.array_equal(u[free == 0], before[free == 0])
    r = mod.stencil_residual(u, rhs, wx, wy, free)
    assert np.all(r[free == 0] == 0)


@pytest.mark.parametrize("mod", BACKENDS)
def test_residual_is_graph_laplacian(mod):
    rng = np.random.default_rng(2)
    H, W = 6, 5
    u, rhs, wx, wy, free = grid_problem(rng, H, W)
    r = mod.stencil_residual(u, rhs, wx, wy, free)
    for i in range(H):
        for j in range(W):
            if not free[i, j]:
                continue
            s = rhs[i, j]
            if j > 0:
                s -= wx[i, j - 1] * (u[i, j] - u[i, j - 1])
            if j < W - 1:
                s -= wx[i, j] * (u[i, j] - u[i, j + 1])
            if i > 0:
                s -= wy[i - 1, j] * (u[i, j] - u[i - 1, j])
            if i < H - 1:
                s -= wy[i, j] * (u[i, j] - u[i + 1, j])
            assert r[i, j] == pytest.approx(s, abs=1e-13)


def test_pure_python_switch():
    env = dict(os.environ, ICON2GLYPH_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import icon2glyph.kernels as k; print(k.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")
