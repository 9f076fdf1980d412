import numpy as np
import pytest

from coughscreen import _backend, numerics
from coughscreen.models import layers


@pytest.fixture(params=_backend.available())
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    k = _backend.get(request.param)
    monkeypatch.setattr(numerics, "kernels", k)
    monkeypatch.setattr(layers, "kernels", k)
    return k


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
