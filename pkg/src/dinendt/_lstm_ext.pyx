# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM time recursion.

Same signatures and cache layout as ``_kernels_py.lstm_seq_forward`` and
``_kernels_py.lstm_seq_backward``.  The per-step matrix products go through
BLAS dgemm; gate nonlinearities run in plain C loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, copysign
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _tanh_from(double x, double e) noexcept nogil:
    # tanh(x) given e = exp(-2|x|); exp loops vectorize, glibc tanh does not
    return copysign((1.0 - e) / (1.0 + e), x)


cdef void _rowmajor_gemm(int m, int n, int k, double alpha, double* a, int lda,
                         double* b, int ldb, double beta, double* c, int ldc,
                         bint trans_b) noexcept nogil:
    # row-major C[m,n] = alpha * A[m,k] @ op(B) + beta * C, via column-major C^T = op(B)^T A^T
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'N'
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def lstm_seq_forward(xs_in, w_in, b_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef int steps = xs.shape[0], batch = xs.shape[1], d = xs.shape[2]
    cdef int hid = b.shape[0] // 4
    cdef int g4 = 4 * hid
    cdef cnp.ndarray[cnp.float64_t, ndim=3] acts = np.empty((steps, batch, g4))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] hs = np.empty((steps, batch, hid))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cs = np.empty((steps, batch, hid))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] tcs = np.empty((steps, batch, hid))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zbuf = np.empty((batch, g4))
    cdef double[:, :, ::1] xv = xs
    cdef double[:, ::1] wv = w
    cdef double[::1] bv = b
    cdef double[:, :, ::1] av = acts
    cdef double[:, :, ::1] hv = hs
    cdef double[:, :, ::1] cv = cs
    cdef double[:, :, ::1] tv = tcs
    cdef double[:, ::1] zv = zbuf
    cdef double[:, ::1] ev = np.empty((batch, g4))
    # sigmoid(x) = (1 + tanh(x / 2)) / 2, so sigmoid gates need exp(-|x|)
    cdef double[::1] fac = np.ones(g4)
    fac[2 * hid:3 * hid] = 2.0
    cdef int t, r, j, q
    cdef double acc, cprev, ci, gi, gf, gg, go
    with nogil:
        for t in range(steps):
            # z = b + x_t @ Wx
            for r in range(batch):
                for j in range(g4):
                    acc = bv[j]
                    for q in range(d):
                        acc = acc + xv[t, r, q] * wv[q, j]
                    zv[r, j] = acc
            if t > 0:
                _rowmajor_gemm(batch, g4, hid, 1.0, &hv[t - 1, 0, 0], hid,
                               &wv[d, 0], g4, 1.0, &zv[0, 0], g4, False)
            for r in range(batch):
                for j in range(g4):
                    ev[r, j] = exp(-fac[j] * fabs(zv[r, j]))
            for r in range(batch):
                for j in range(hid):
                    gi = 0.5 + 0.5 * _tanh_from(zv[r, j], ev[r, j])
                    gf = 0.5 + 0.5 * _tanh_from(zv[r, hid + j], ev[r, hid + j])
                    gg = _tanh_from(zv[r, 2 * hid + j], ev[r, 2 * hid + j])
                    go = 0.5 + 0.5 * _tanh_from(zv[r, 3 * hid + j], ev[r, 3 * hid + j])
                    av[t, r, j] = gi
                    av[t, r, hid + j] = gf
                    av[t, r, 2 * hid + j] = gg
                    av[t, r, 3 * hid + j] = go
                    cprev = cv[t - 1, r, j] if t > 0 else 0.0
                    cv[t, r, j] = gf * cprev + gi * gg
                for j in range(hid):
                    ci = cv[t, r, j]
                    tv[t, r, j] = _tanh_from(ci, exp(-2.0 * fabs(ci)))
                    hv[t, r, j] = av[t, r, 3 * hid + j] * tv[t, r, j]
    out = np.concatenate([hs, cs], axis=-1)
    return out, (xs, w, acts, hs, cs, tcs)


def lstm_seq_backward(cache, dhs_in, dcs_in):
    xs_o, w_o, acts_o, hs_o, cs_o, tcs_o = cache
    cdef double[:, :, ::1] xv = xs_o
    cdef double[:, ::1] wv = w_o
    cdef double[:, :, ::1] av = acts_o
    cdef double[:, :, ::1] hv = hs_o
    cdef double[:, :, ::1] cv = cs_o
    cdef double[:, :, ::1] tv = tcs_o
    cdef double[:, :, ::1] dhv = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef double[:, :, ::1] dcv = np.ascontiguousarray(dcs_in, dtype=np.float64)
    cdef int steps = xv.shape[0], batch = xv.shape[1], d = xv.shape[2]
    cdef int hid = hv.shape[2]
    cdef int g4 = 4 * hid
    dz_arr = np.empty((steps, batch, g4))
    dw_arr = np.zeros((d + hid, g4))
    db_arr = np.zeros(g4)
    dxs_arr = np.empty((steps, batch, d))
    dhn_arr = np.zeros((batch, hid))
    dcn_arr = np.zeros((batch, hid))
    cdef double[:, :, ::1] dzv = dz_arr
    cdef double[:, ::1] dwv = dw_arr
    cdef double[::1] dbv = db_arr
    cdef double[:, :, ::1] dxv = dxs_arr
    cdef double[:, ::1] dhn = dhn_arr
    cdef double[:, ::1] dcn = dcn_arr
    cdef int t, r, j, q
    cdef double dh, dc, gi, gf, gg, go, tc, cprev, acc
    with nogil:
        for t in range(steps - 1, -1, -1):
            for r in range(batch):
                for j in range(hid):
                    gi = av[t, r, j]
                    gf = av[t, r, hid + j]
                    gg = av[t, r, 2 * hid + j]
                    go = av[t, r, 3 * hid + j]
                    tc = tv[t, r, j]
                    cprev = cv[t - 1, r, j] if t > 0 else 0.0
                    dh = dhv[t, r, j] + dhn[r, j]
                    dc = dcv[t, r, j] + dcn[r, j] + dh * go * (1.0 - tc * tc)
                    dzv[t, r, j] = dc * gg * gi * (1.0 - gi)
                    dzv[t, r, hid + j] = dc * cprev * gf * (1.0 - gf)
                    dzv[t, r, 2 * hid + j] = dc * gi * (1.0 - gg * gg)
                    dzv[t, r, 3 * hid + j] = dh * tc * go * (1.0 - go)
                    dcn[r, j] = dc * gf
            # dh_prev = dz_t @ Wh^T
            _rowmajor_gemm(batch, hid, g4, 1.0, &dzv[t, 0, 0], g4,
                           &wv[d, 0], g4, 0.0, &dhn[0, 0], hid, True)
        for t in range(steps):
            for r in range(batch):
                for q in range(d):
                    acc = 0.0
                    for j in range(g4):
                        acc = acc + dzv[t, r, j] * wv[q, j]
                    dxv[t, r, q] = acc
                for j in range(g4):
                    dbv[j] = dbv[j] + dzv[t, r, j]
    flat = dz_arr.reshape(-1, g4)
    dw_arr[:d] = np.asarray(xs_o).reshape(-1, d).T @ flat
    if steps > 1:
        dw_arr[d:] = np.asarray(hs_o)[:-1].reshape(-1, hid).T @ dz_arr[1:].reshape(-1, g4)
    return dxs_arr, dw_arr, db_arr
