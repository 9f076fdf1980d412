import os
import subprocess
import sys

import numpy as np
import pytest

from coughscreen import _backend

from .oracles import naive_dft

BACKENDS = _backend.available()


def test_compiled_backend_is_built():
    # the editable install builds the extension; a missing build should be loud
    assert BACKENDS[0] == "compiled"


@pytest.mark.parametrize("n", [4, 64, 1024])
def test_rfft_matches_oracle(n):
    x = np.random.default_rng(n).standard_normal((7, n))
    ref = naive_dft(x)
    for name in BACKENDS:
        got = _backend.get(name).rfft_batch(x)
        assert np.max(np.abs(got - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("kh,kw,stride,pad", [(3, 3, 1, 1), (2, 2, 2, 0), (3, 1, 1, 0)])
def test_backends_agree_on_im2col(kh, kw, stride, pad):
    rng = np.random.default_rng(0)
    img = rng.standard_normal((3, 2, 9, 7))
    outs = [_backend.get(n).im2col(img, kh, kw, stride, pad) for n in BACKENDS]
    cols = outs[0]
    for o in outs[1:]:
        assert np.array_equal(o, cols)
    backs = [_backend.get(n).col2im(cols, img.shape, kh, kw, stride, pad) for n in BACKENDS]
    for b in backs[1:]:
        assert np.allclose(b, backs[0], rtol=0, atol=1e-12)
    # col2im is the adjoint of im2col: <im2col(x), c> == <x, col2im(c)>
    c = rng.standard_normal(cols.shape)
    for name in BACKENDS:
        k = _backend.get(name)
        lhs = np.sum(k.im2col(img, kh, kw, stride, pad) * c)
        rhs = np.sum(img * k.col2im(c, img.shape, kh, kw, stride, pad))
        assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("value,expected", [("1", "python"), ("0", BACKENDS[0])])
def test_environment_selects_backend(value, expected):
    env = dict(os.environ, COUGHSCREEN_PURE_PYTHON=value)
    out = subprocess.run([sys.executable, "-c", "import coughscreen; print(coughscreen.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get("gpu")
