# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: batched radix-2 FFT of real frames, im2col and col2im."""

import numpy as np
from libc.math cimport cos, sin, M_PI


def rfft_batch(const double[:, ::1] x):
    cdef Py_ssize_t n_rows = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t half = n // 2
    cdef Py_ssize_t r, i, j, k, m, h, step, bits, rev, tmp
    cdef double ur, ui, vr, vi, wr, wi

    out = np.empty((n_rows, half + 1, 2), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    re_arr = np.empty(n, dtype=np.float64)
    im_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] re = re_arr
    cdef double[::1] im = im_arr
    tw_r_arr = np.empty(max(half, 1), dtype=np.float64)
    tw_i_arr = np.empty(max(half, 1), dtype=np.float64)
    cdef double[::1] tw_r = tw_r_arr
    cdef double[::1] tw_i = tw_i_arr
    perm_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] perm = perm_arr

    bits = 0
    while (<Py_ssize_t>1 << bits) < n:
        bits += 1
    for i in range(n):
        rev = 0
        tmp = i
        for j in range(bits):
            rev = (rev << 1) | (tmp & 1)
            tmp >>= 1
        perm[i] = rev
    for k in range(half):
        tw_r[k] = cos(2.0 * M_PI * k / n)
        tw_i[k] = -sin(2.0 * M_PI * k / n)

    for r in range(n_rows):
        for i in range(n):
            re[perm[i]] = x[r, i]
            im[perm[i]] = 0.0
        m = 2
        while m <= n:
            h = m // 2
            step = n // m
            for k in range(0, n, m):
                for j in range(h):
                    wr = tw_r[j * step]
                    wi = tw_i[j * step]
                    vr = re[k + j + h] * wr - im[k + j + h] * wi
                    vi = re[k + j + h] * wi + im[k + j + h] * wr
                    ur = re[k + j]
                    ui = im[k + j]
                    re[k + j] = ur + vr
                    im[k + j] = ui + vi
                    re[k + j + h] = ur - vr
                    im[k + j + h] = ui - vi
            m *= 2
        for k in range(half + 1):
            o[r, k, 0] = re[k]
            o[r, k, 1] = im[k]
    return out.view(np.complex128)[:, :, 0]


def im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], hh = x.shape[2], ww = x.shape[3]
    cdef Py_ssize_t oh = (hh + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (ww + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, p, q, row, col, yy, xx
    out = np.empty((nb * oh * ow, nc * kh * kw), dtype=np.float64)
    cdef double[:, ::1] o = out
    for b in range(nb):
        for p in range(oh):
            for q in range(ow):
                row = (b * oh + p) * ow + q
                col = 0
                for c in range(nc):
                    for i in range(kh):
                        yy = p * stride + i - pad
                        for j in range(kw):
                            xx = q * stride + j - pad
                            if yy < 0 or yy >= hh or xx < 0 or xx >= ww:
                                o[row, col] = 0.0
                            else:
                                o[row, col] = x[b, c, yy, xx]
                            col += 1
    return out


def col2im(const double[:, ::1] cols, tuple shape, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = shape[0], nc = shape[1], hh = shape[2], ww = shape[3]
    cdef Py_ssize_t oh = (hh + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (ww + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, p, q, row, col, yy, xx
    out = np.zeros((nb, nc, hh, ww), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    for b in range(nb):
        for p in range(oh):
            for q in range(ow):
                row = (b * oh + p) * ow + q
                for c in range(nc):
                    for i in range(kh):
                        yy = p * stride + i - pad
                        if yy < 0 or yy >= hh:
                            continue
                        for j in range(kw):
                            xx = q * stride + j - pad
                            if xx < 0 or xx >= ww:
                                continue
                            col = (c * kh + i) * kw + j
                            o[b, c, yy, xx] += cols[row, col]
    return out
