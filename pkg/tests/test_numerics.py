import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coughscreen.errors import EmptyInput, InvalidLength
from coughscreen.numerics import (RNG_ALGORITHM, dct2, derive_seed, fft_real, idct2, ifft_real,
                                  make_rng, moments)

from .oracles import loop_dft, naive_dct, naive_dft

LENGTHS = (256, 512, 1024, 2048, 4096)


def test_fft_dc_only(backend):
    np.testing.assert_allclose(fft_real([1.0, 1.0, 1.0, 1.0]), [4, 0, 0], atol=1e-15)


def test_fft_impulse_is_flat(backend):
    np.testing.assert_allclose(fft_real([1.0, 0.0, 0.0, 0.0]), [1, 1, 1], atol=1e-15)


def test_fft_matches_loop_dft_on_short_signal(backend, rng):
    x = rng.standard_normal(16)
    np.testing.assert_allclose(fft_real(x), loop_dft(list(x)), atol=1e-12)


@pytest.mark.parametrize("n", LENGTHS)
def test_fft_matches_naive_dft_200_frames(backend, n):
    x = make_rng(n).standard_normal((200, n))
    err = np.max(np.abs(fft_real(x) - naive_dft(x)))
    assert err <= 1e-9


@pytest.mark.parametrize("n", LENGTHS)
def test_ifft_round_trip(backend, n):
    x = make_rng(n + 1).standard_normal(n)
    assert np.max(np.abs(ifft_real(fft_real(x), n) - x)) <= 1e-9


def test_ifft_round_trip_batch(backend, rng):
    x = rng.standard_normal((3, 64))
    np.testing.assert_allclose(ifft_real(fft_real(x), 64), x, atol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 100, 1000, 257])
def test_fft_rejects_non_power_of_two(n):
    with pytest.raises(InvalidLength):
        fft_real(np.zeros(n))


def test_dct_constant_only_dc():
    c = dct2(np.full(4, 3.0), 4)
    assert c[0] == pytest.approx(6.0)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-15)


def test_dct_ramp_matches_cosine_sum():
    x = np.arange(8.0)
    assert np.max(np.abs(dct2(x) - naive_dct(list(x)))) <= 1e-9


def test_dct_truncation_and_error():
    x = np.linspace(-1, 1, 10)
    np.testing.assert_allclose(dct2(x, 3), dct2(x)[:3])
    with pytest.raises(InvalidLength):
        dct2(x, 11)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 130), st.integers(0, 2**32 - 1))
def test_dct_round_trip(n, seed):
    x = make_rng(seed).standard_normal(n)
    assert np.max(np.abs(idct2(dct2(x)) - x)) <= 1e-9


def test_moments_examples():
    assert moments([1, 1, 1, 1]) == (1.0, 0.0, 0.0)
    assert moments([-1, 1, -1, 1]) == (0.0, 1.0, 1.0)
    with pytest.raises(EmptyInput):
        moments([])


def test_moments_gaussian_kurtosis():
    _, sigma, m4 = moments(make_rng(2024).standard_normal(10**6))
    assert abs(m4 / sigma**4 - 3.0) <= 0.05


def test_rng_determinism():
    assert RNG_ALGORITHM == "PCG64"
    a = make_rng(99).random(10**4)
    b = make_rng(99).random(10**4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(100).random(10**4))


def test_rng_stream_is_pinned():
    # first draws of PCG64(0), fixed so a numpy change in the stream is caught
    assert make_rng(0).integers(0, 2**31, 3).tolist() == [1826701615, 1367864807, 1097657232]


def test_derive_seed_depends_on_keys_not_order_of_calls():
    a = derive_seed(7, 1, 2)
    _ = derive_seed(7, 3)
    assert derive_seed(7, 1, 2) == a
    assert derive_seed(7, 2, 1) != a
    assert derive_seed(8, 1, 2) != a
