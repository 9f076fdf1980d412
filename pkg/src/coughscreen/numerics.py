"""Numeric core: radix-2 real FFT, orthonormal DCT-II, moments and seeding.

Dense matrices and tensors are plain ``numpy.ndarray`` objects in float64.
Random streams come from :func:`make_rng`, which always uses numpy's PCG64
bit generator so that a seed reproduces the same stream on every platform.
"""

from functools import lru_cache

import numpy as np

from ._backend import kernels
from .errors import EmptyInput, InvalidLength

RNG_ALGORITHM = "PCG64"


def make_rng(seed):
    """Return a fresh ``numpy.random.Generator`` seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed, *keys):
    """Child seed for a work unit identified by ``keys`` (non-negative ints).

    Independent of execution order, which keeps parallel and resumed runs
    identical to sequential ones.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def _check_length(n):
    if not is_power_of_two(n):
        raise InvalidLength(f"FFT length must be a power of two, got {n}")


def fft_real(frame):
    """Spectrum bins ``0..N/2`` of a real frame whose length is a power of two.

    Accepts a 1-D frame or a 2-D batch of frames (one per row).
    """
    x = np.asarray(frame, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    _check_length(x2.shape[1])
    if x2.shape[1] == 1:
        out = x2.astype(np.complex128)
    else:
        out = kernels.rfft_batch(np.ascontiguousarray(x2))
    return out[0] if single else out


def _hermitian_full(half, n):
    # rebuild all n bins of the spectrum of a real signal from bins 0..n/2
    tail = np.conj(half[..., 1:n - n // 2][..., ::-1])
    return np.concatenate([half, tail], axis=-1)


def ifft_real(spectrum, n):
    """Inverse of :func:`fft_real`: bins ``0..n/2`` back to ``n`` real samples."""
    _check_length(n)
    spec = np.asarray(spectrum, dtype=np.complex128)
    if spec.shape[-1] != n // 2 + 1:
        raise InvalidLength(f"expected {n // 2 + 1} bins, got {spec.shape[-1]}")
    if n == 1:
        return spec.real.copy()
    full = _hermitian_full(spec, n)
    # ifft(X) = conj(fft(conj(X))) / n, with the complex forward transform
    # assembled from two real transforms
    re_part = np.atleast_2d(full.real)
    im_part = np.atleast_2d(-full.imag)
    fr = _hermitian_full(kernels.rfft_batch(np.ascontiguousarray(re_part)), n)
    fi = _hermitian_full(kernels.rfft_batch(np.ascontiguousarray(im_part)), n)
    out = np.conj(fr + 1j * fi).real / n
    return out[0] if spec.ndim == 1 else out


@lru_cache(maxsize=64)
def dct_matrix(n):
    """Orthonormal DCT-II matrix ``M`` with ``coeffs = M @ values``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


def dct2(values, n_out=None):
    """Orthonormal DCT-II along the last axis, keeping the first ``n_out`` coefficients."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[-1]
    if n == 0:
        raise EmptyInput("dct2 of an empty vector")
    if n_out is None:
        n_out = n
    if n_out > n or n_out < 0:
        raise InvalidLength(f"n_out={n_out} exceeds input length {n}")
    return v @ dct_matrix(n)[:n_out].T


def idct2(coeffs):
    """Inverse of the full-length orthonormal DCT-II."""
    c = np.asarray(coeffs, dtype=np.float64)
    return c @ dct_matrix(c.shape[-1])


def moments(values):
    """Mean, population standard deviation and fourth central moment."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("moments of an empty vector")
    mu = x.mean()
    d = x - mu
    d2 = d * d
    return float(mu), float(np.sqrt(d2.mean())), float((d2 * d2).mean())
