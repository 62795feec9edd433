import numpy as np
import pytest

from monoloop import _backend
from monoloop.model import goodwin_model, linear_model

# Period-two pair of g(u) = 2 / (1 + u^4), from a standalone scalar iteration
# (10^6 steps from u = 0) confirmed by bracketing g(g(u)) - u.
P2_LOW = 0.11773217228902418
P2_HIGH = 1.9996158266853648
GOLDEN = (5 ** 0.5 - 1) / 2


@pytest.fixture(params=sorted(_backend.available()))
def kernels(request):
    return _backend.available()[request.param]


@pytest.fixture(scope="session")
def goodwin_convergent():
    return goodwin_model(1.0, 1.0)


@pytest.fixture(scope="session")
def goodwin_p2():
    return goodwin_model(2.0, 4.0)


def scalar(k):
    return linear_model([[-1.0]], [[1.0]], [[k]], name="scalar")


def random_stable(rng, n):
    """Random matrix shifted so every eigenvalue has real part <= -0.5."""
    M = rng.standard_normal((n, n))
    return M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(n)


@pytest.fixture(params=sorted(_backend.available()))
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    monkeypatch.setattr(_backend, "kernels", _backend.available()[request.param])
    return request.param
