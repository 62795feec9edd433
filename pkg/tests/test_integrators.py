import json
import math

import numpy as np
import pytest

from monoloop.errors import Diverged, DimensionMismatch, EvalDomainError, NoConvergence, SingularJacobian
from monoloop.integrators import (
    CLOSED_LOOP,
    IntegratorOpts,
    dde_step,
    fd_jacobian,
    find_steady_state,
    integrate,
    integrate_dde,
    newton_solve,
)
from monoloop.model import load_model

from conftest import scalar

RK4 = IntegratorOpts(method="rk4_fixed", step=0.01)


def test_decay_both_methods(backend):
    m = load_model("states x\ndx = -x\n")
    for opts in (IntegratorOpts(rel_tol=1e-10), RK4):
        tr = integrate(m, [1.0], None, (0.0, 1.0), opts)
        assert tr.status == "reached_t_end"
        assert tr.final[0] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_constant_input_steady_value():
    tr = integrate(scalar(0.5), [0.0], [3.0], (0.0, 30.0))
    assert tr.final[0] == pytest.approx(3.0, abs=1e-9)


def test_piecewise_schedule_matches_analytic():
    m = scalar(1.0)
    tr = integrate(m, [0.0], [(0.0, [1.0]), (1.0, [0.0])], (0.0, 2.0), IntegratorOpts(rel_tol=1e-12))
    expected = (1 - math.exp(-1.0)) * math.exp(-1.0)
    assert tr.final[0] == pytest.approx(expected, abs=1e-9)
    assert 1.0 in tr.times


def test_closed_loop_keyword(goodwin_convergent):
    tr = integrate(goodwin_convergent, [0.0, 0.0, 0.0], CLOSED_LOOP, (0.0, 40.0))
    assert np.allclose(tr.final, (5 ** 0.5 - 1) / 2, atol=1e-6)


def test_divergence_status():
    m = load_model("states x\ndx = x^2\n")
    tr = integrate(m, [1.0], None, (0.0, 2.0))
    assert tr.status == "diverged"
    assert tr.times[-1] == pytest.approx(1.0, abs=1e-6)


def test_domain_error_raised():
    m = load_model("states x\ndx = -1 + 0 * ln(x)\n")
    with pytest.raises(EvalDomainError):
        integrate(m, [0.5], None, (0.0, 1.0), RK4)


def test_input_dimension_checked():
    with pytest.raises(DimensionMismatch):
        integrate(scalar(1.0), [0.0], [1.0, 2.0], (0.0, 1.0))
    with pytest.raises(DimensionMismatch):
        integrate(scalar(1.0), [0.0, 0.0], [1.0], (0.0, 1.0))


def test_trajectory_files(tmp_path):
    tr = integrate(scalar(1.0), [0.0], [1.0], (0.0, 1.0), RK4)
    tr.write(tmp_path / "t.csv", {"seed": 3})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x1" and len(lines) == len(tr.times) + 1
    meta = json.loads((tmp_path / "t.json").read_text())
    assert meta["status"] == "reached_t_end" and meta["seed"] == 3


def test_dde_step_divides_delay():
    h = dde_step(0.7, 0.01)
    assert h <= 0.01 and 0.7 / h == pytest.approx(round(0.7 / h), abs=1e-9)


def test_dde_stable_and_growing(backend):
    # roots of l = -1 - b exp(-l r): stable for b=0.5, r=1; growing for b=2, r=5
    stable = integrate_dde(scalar(0.5), 1.0, [1.0], (0.0, 60.0))
    assert abs(stable.final[0]) < 1e-20
    grow = integrate_dde(scalar(2.0), 5.0, [1.0], (0.0, 200.0))
    assert grow.status == "reached_t_end"
    tail = np.abs(grow.states[grow.times > 150])
    assert tail.max() > 1e3


def test_dde_history_phase_is_open_loop():
    # on [0, r] the input is h(x0) = -k x0, so x(t) = -k + (1 + k) e^{-t}
    tr = integrate_dde(scalar(0.5), 2.0, [1.0], (0.0, 2.0))
    assert tr.final[0] == pytest.approx(-0.5 + 1.5 * math.exp(-2.0), abs=1e-9)


def test_fd_jacobian():
    J = fd_jacobian(lambda x: np.array([x[0] ** 2, x[0] * x[1]]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.0], [2.0, 1.0]], atol=1e-8)


def test_newton_solves_and_reports_singular():
    x, res, _ = newton_solve(lambda x: np.array([x[0] ** 2 - 2.0]), np.array([1.0]))
    assert x[0] == pytest.approx(math.sqrt(2.0), abs=1e-12)
    with pytest.raises(SingularJacobian):
        newton_solve(lambda x: np.array([x[0] + x[1] - 1, 2 * x[0] + 2 * x[1]]), np.zeros(2))
    with pytest.raises((NoConvergence, SingularJacobian)):
        newton_solve(lambda x: np.array([x[0] ** 2 + 1.0]), np.array([0.3]))


def test_steady_state_goodwin(goodwin_p2):
    ss = find_steady_state(goodwin_p2, [2.0], np.zeros(3))
    assert ss.converged
    np.testing.assert_allclose(ss.state, [2.0, 2.0, 2.0], atol=1e-10)


def test_steady_state_divergence():
    m = load_model("states x\ninputs u\ndx = x + u\ny1 = -x\n")
    with pytest.raises(Diverged):
        find_steady_state(m, [1.0], [0.0])


def test_steady_state_not_settled_is_reported():
    m = load_model("states x y\ndx = y\ndy = -x\n")  # undamped oscillator
    ss = find_steady_state(m, None, [1.0, 0.0], t_max=50.0)
    assert not ss.converged and "not settled" in ss.note
