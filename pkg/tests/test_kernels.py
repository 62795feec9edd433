"""Both kernel backends: agreement and basic numerics."""

import math

import numpy as np
import pytest

from monoloop import _backend
from monoloop.model import goodwin_model, load_model

DECAY = load_model("states x\ndx = -x\n")
DELAYED = load_model("states x\ninputs u\ndx = u\ny1 = -x\n")  # x' = -x(t - r)


def _f(model):
    p = model.f_program
    return p.code, p.offsets, p.consts


def rk4_error(k, h):
    code, offs, consts = _f(DECAY)
    ts, xs, *_ = k.rk4(code, offs, consts, DECAY.env(), 1, np.array([1.0]), 0.0, 1.0, h, 1e9)
    return abs(xs[-1, 0] - math.exp(-1.0))


def test_rk4_fourth_order(kernels):
    errs = [rk4_error(kernels, 0.1 / 2 ** i) for i in range(4)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(16 * 0.8 <= r <= 16 * 1.2 for r in ratios), ratios


def test_rk4_lands_on_t_end(kernels):
    code, offs, consts = _f(DECAY)
    ts, *_ = kernels.rk4(code, offs, consts, DECAY.env(), 1, np.array([1.0]), 0.0, 1.0, 0.3, 1e9)
    assert ts[-1] == 1.0


def test_rkf45_accuracy(kernels):
    code, offs, consts = _f(DECAY)
    ts, xs, status, *_ = kernels.rkf45(code, offs, consts, DECAY.env(), 1, np.array([1.0]),
                                       0.0, 1.0, 0.1, 1e-10, 1e-12, 100000, 1e9, 1e-14)
    assert status == _backend.ST_OK
    assert abs(xs[-1, 0] - math.exp(-1.0)) < 1e-8


def test_rkf45_divergence_flag(kernels):
    blow = load_model("states x\ndx = x^2\n")
    code, offs, consts = _f(blow)
    ts, xs, status, *_ = kernels.rkf45(code, offs, consts, blow.env(), 1, np.array([1.0]),
                                       0.0, 2.0, 0.01, 1e-9, 1e-12, 1_000_000, 1e9, 1e-14)
    assert status == _backend.ST_DIVERGED
    assert ts[-1] == pytest.approx(1.0, abs=1e-6)


def test_domain_status_reports_instruction(kernels):
    m = load_model("states x\ndx = -sqrt(x)\n")
    code, offs, consts = _f(m)
    ts, xs, status, pc, *_ = kernels.rk4(code, offs, consts, m.env(), 1, np.array([1.0]),
                                         0.0, 5.0, 0.1, 1e9)
    assert status == _backend.ST_DOMAIN
    assert m.f_program.srcmap[pc] == 1  # the sqrt call


def test_dde_polynomial_solution(kernels):
    # x' = -x(t - 1) with x = 1 on [-1, 0] is piecewise polynomial:
    # x(2) = -1/2, x(3) = -1/6
    p = DELAYED.program
    ts, xs, status, *_ = kernels.dde_rk4(p.code, p.offsets, p.consts, DELAYED.env(), 1, 1,
                                         np.array([1.0]), 1.0, 0.0, 3.0, 0.1, 1e9)
    assert status == _backend.ST_OK
    assert xs[np.argmin(abs(ts - 2.0)), 0] == pytest.approx(-0.5, abs=1e-12)
    assert xs[-1, 0] == pytest.approx(-1.0 / 6.0, abs=1e-12)


def test_backends_agree_on_goodwin():
    backends = _backend.available()
    if len(backends) < 2:
        pytest.skip("compiled extension not built")
    m = goodwin_model(2.0, 4.0)
    f, fh = m.f_program, m.program
    out = {}
    for name, k in backends.items():
        a = k.rk4(f.code, f.offsets, f.consts, m.env([1.5]), 3, np.zeros(3), 0.0, 10.0, 0.01, 1e9)
        b = k.rkf45(f.code, f.offsets, f.consts, m.env([1.5]), 3, np.zeros(3), 0.0, 10.0, 0.01,
                    1e-10, 1e-12, 10 ** 6, 1e9, 1e-14)
        c = k.dde_rk4(fh.code, fh.offsets, fh.consts, m.env(), 3, 1, np.full(3, 0.5), 3.0,
                      0.0, 30.0, 0.01, 1e9)
        out[name] = (a[1], b[0], b[1], c[1])
    ref = out.pop("python")
    for got in out.values():
        for x, y in zip(got, ref):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("M, expected", [
    ([[-1.0, -0.5], [-0.5, -1.0]], [-1.5, -0.5]),
    ([[2.0, 0.0], [0.0, -3.0]], [-3.0, 2.0]),
    ([[0.0, -1.0], [1.0, 0.0]], [-1j, 1j]),
])
def test_hqr_small_examples(kernels, M, expected):
    wr, wi, its, ok = kernels.hqr_eigen(np.array(M), 60)
    assert ok
    got = np.sort_complex(wr + 1j * wi)
    np.testing.assert_allclose(got, np.sort_complex(np.array(expected, dtype=complex)), atol=1e-14)


def test_hqr_trace_and_determinant(kernels):
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(1, 11))
        M = rng.standard_normal((n, n))
        wr, wi, its, ok = kernels.hqr_eigen(M, 30 * n)
        assert ok
        ev = wr + 1j * wi
        assert abs(ev.sum() - np.trace(M)) <= 1e-8 * np.abs(M).sum(axis=0).max()
        det = np.linalg.det(M)
        assert abs(np.prod(ev) - det) <= 1e-6 * max(abs(det), 1e-300) + 1e-12


def test_hqr_iteration_cap_reports_failure(kernels):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((8, 8))
    *_, ok = kernels.hqr_eigen(M, 1)
    assert not ok
