# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: exact Euclidean distance transform with feature
indices, and the barrier-aware red-black Gauss-Seidel relaxation used by
the diffusion solver.

The numpy twins live in ``_pykernels``. Distances and relaxation results
agree exactly; on equidistant ties the two EDTs may name different seeds.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef void _envelope_1d(const double* f, Py_ssize_t n, Py_ssize_t stride,
                       double* d, Py_ssize_t* arg,
                       Py_ssize_t* v, double* z) noexcept nogil:
    # Felzenszwalb-Huttenlocher lower envelope of parabolas; entries with
    # f = inf are not parabolas at all.
    cdef Py_ssize_t q, k = -1, j
    cdef double s, fq
    for q in range(n):
        fq = f[q * stride]
        if fq == INFINITY:
            continue
        while k >= 0:
            s = ((fq + q * q) - (f[v[k] * stride] + v[k] * v[k])) / (2.0 * (q - v[k]))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        if k == 0:
            z[k] = -INFINITY
        else:
            z[k] = ((fq + q * q) - (f[v[k - 1] * stride] + v[k - 1] * v[k - 1])) / (2.0 * (q - v[k - 1]))
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            d[q] = INFINITY
            arg[q] = -1
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        d[q] = (q - v[j]) * (q - v[j]) + f[v[j] * stride]
        arg[q] = v[j]


def edt_features(cnp.uint8_t[:, ::1] seeds):
    """Squared EDT over pixel centres plus the flat index of the nearest seed.

    Returns ``(d2, feature)``; ``feature`` is -1 everywhere when there are
    no seeds.
    """
    cdef Py_ssize_t H = seeds.shape[0], W = seeds.shape[1]
    cdef Py_ssize_t i, j, r, n = max(H, W)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = np.empty((H, W), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] row_of = np.empty((H, W), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d2 = np.empty((H, W), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] feat = np.empty((H, W), dtype=np.int64)
    cdef double[:, ::1] gv = g
    cdef cnp.int64_t[:, ::1] rv = row_of
    cdef double[:, ::1] dv = d2
    cdef cnp.int64_t[:, ::1] fv = feat
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dline = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] aline = np.empty(n, dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] vbuf = np.empty(n + 1, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(n + 2, dtype=np.float64)
    cdef double* dl = <double*> dline.data
    cdef Py_ssize_t* al = <Py_ssize_t*> aline.data
    cdef Py_ssize_t* vb = <Py_ssize_t*> vbuf.data
    cdef double* zb = <double*> zbuf.data
    cdef Py_ssize_t last
    cdef double dist

    with nogil:
        # columns: distance to the nearest seed row
        for j in range(W):
            last = -1
            for i in range(H):
                if seeds[i, j]:
                    last = i
                rv[i, j] = last
            last = -1
            for i in range(H - 1, -1, -1):
                if seeds[i, j]:
                    last = i
                if last >= 0 and (rv[i, j] < 0 or last - i < i - rv[i, j]):
                    rv[i, j] = last
            for i in range(H):
                if rv[i, j] < 0:
                    gv[i, j] = INFINITY
                else:
                    dist = <double>(i - rv[i, j])
                    gv[i, j] = dist * dist
        # rows: lower envelope over the column results
        for i in range(H):
            _envelope_1d(&gv[i, 0], W, 1, dl, al, vb, zb)
            for j in range(W):
                dv[i, j] = dl[j]
                if al[j] < 0:
                    fv[i, j] = -1
                else:
                    r = rv[i, al[j]]
                    fv[i, j] = r * W + al[j]
    return d2, feat


def rb_gauss_seidel(double[:, ::1] u, const double[:, ::1] rhs,
                    const double[:, ::1] wx, const double[:, ::1] wy,
                    const cnp.uint8_t[:, ::1] free, int sweeps, bint reverse):
    """In-place red-black Gauss-Seidel on sum_q w_pq (u_p - u_q) = rhs_p.

    ``wx[i, j]`` couples (i, j)-(i, j+1); ``wy[i, j]`` couples (i, j)-(i+1, j).
    ``reverse`` runs black before red (the adjoint ordering).
    """
    cdef Py_ssize_t H = u.shape[0], W = u.shape[1]
    cdef Py_ssize_t i, j, s, c, colour
    cdef double num, den, w
    with nogil:
        for s in range(sweeps):
            for c in range(2):
                colour = (1 - c) if reverse else c
                for i in range(H):
                    j = (i + colour) & 1
                    while j < W:
                        if free[i, j]:
                            num = rhs[i, j]
                            den = 0.0
                            if j > 0:
                                w = wx[i, j - 1]
                                num = num + w * u[i, j - 1]
                                den = den + w
                            if j < W - 1:
                                w = wx[i, j]
                                num = num + w * u[i, j + 1]
                                den = den + w
                            if i > 0:
                                w = wy[i - 1, j]
                                num = num + w * u[i - 1, j]
                                den = den + w
                            if i < H - 1:
                                w = wy[i, j]
                                num = num + w * u[i + 1, j]
                                den = den + w
                            if den > 0.0:
                                u[i, j] = num / den
                        j += 2


def stencil_residual(const double[:, ::1] u, const double[:, ::1] rhs,
                     const double[:, ::1] wx, const double[:, ::1] wy,
                     const cnp.uint8_t[:, ::1] free):
    """rhs - A u on free pixels, zero elsewhere."""
    cdef Py_ssize_t H = u.shape[0], W = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, w, up
    out_arr = np.zeros((H, W), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(H):
            for j in range(W):
                if not free[i, j]:
                    continue
                up = u[i, j]
                acc = rhs[i, j]
                if j > 0:
                    w = wx[i, j - 1]
                    acc = acc - w * (up - u[i, j - 1])
                if j < W - 1:
                    w = wx[i, j]
                    acc = acc - w * (up - u[i, j + 1])
                if i > 0:
                    w = wy[i - 1, j]
                    acc = acc - w * (up - u[i - 1, j])
                if i < H - 1:
                    w = wy[i, j]
                    acc = acc - w * (up - u[i + 1, j])
                out[i, j] = acc
    return out_arr
