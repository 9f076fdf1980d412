"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; used when the extension is not built or when
``COUGHSCREEN_PURE_PYTHON=1``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_PLAN_CACHE = {}


def _plan(n):
    plan = _PLAN_CACHE.get(n)
    if plan is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            perm |= ((idx >> b) & 1) << (bits - 1 - b)
        twiddles = {}
        h = 1
        while h < n:
            k = np.arange(h)
            # exact angles per stage, no recursive multiplication
            twiddles[h] = np.cos(np.pi * k / h) - 1j * np.sin(np.pi * k / h)
            h *= 2
        plan = (perm, twiddles)
        _PLAN_CACHE[n] = plan
    return plan


def rfft_batch(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_rows, n = x.shape
    perm, twiddles = _plan(n)
    buf = np.empty((n_rows, n), dtype=np.complex128)
    buf[:, perm] = x
    h = 1
    while h < n:
        blocks = buf.reshape(n_rows, n // (2 * h), 2, h)
        even = blocks[:, :, 0, :]
        odd = blocks[:, :, 1, :] * twiddles[h]
        buf = np.concatenate([even + odd, even - odd], axis=2).reshape(n_rows, n)
        h *= 2
    return buf[:, : n // 2 + 1].copy()


def im2col(x, kh, kw, stride, pad):
    x = np.asarray(x, dtype=np.float64)
    nb, nc, _, _ = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(nb * oh * ow, nc * kh * kw)


def col2im(cols, shape, kh, kw, stride, pad):
    nb, nc, hh, ww = shape
    oh = (hh + 2 * pad - kh) // stride + 1
    ow = (ww + 2 * pad - kw) // stride + 1
    patches = cols.reshape(nb, oh, ow, nc, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((nb, nc, hh + 2 * pad, ww + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += patches[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + hh, pad:pad + ww]
    return np.ascontiguousarray(out)
