import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoloop.errors import DimensionMismatch, MarginCase, NoConvergence, SingularA
from monoloop.linear import (
    eigenvalues,
    extended_matrices,
    gain_matrix,
    is_hurwitz,
    is_quasi_monotone,
    power_radius,
    random_metzler_instance,
    small_gain_report,
    spectral_radius,
)
from monoloop.order import OrthantOrder


@pytest.mark.parametrize("A, signs, expected", [
    ([[-1, 2], [3, -4]], (1, 1), True),
    ([[-1, -2], [3, -4]], (1, 1), False),
    ([[-1, -2], [-3, -4]], (1, -1), True),
])
def test_quasi_monotone(A, signs, expected):
    assert is_quasi_monotone(A, OrthantOrder(signs)) is expected


def test_quasi_monotone_dimension_check():
    with pytest.raises(DimensionMismatch):
        is_quasi_monotone([[1, 2, 3]])
    with pytest.raises(DimensionMismatch):
        is_quasi_monotone([[1, 0], [0, 1]], (1, 1, 1))


def test_eigenvalues_examples():
    ev = eigenvalues([[-1.0, -0.5], [-0.5, -1.0]])
    np.testing.assert_allclose(ev.eigenvalues, [-1.5, -0.5], atol=1e-14)
    assert ev.max_real == pytest.approx(-0.5)
    rot = eigenvalues([[0.0, -1.0], [1.0, 0.0]]).eigenvalues
    np.testing.assert_allclose(rot, [-1j, 1j], atol=1e-14)


def test_eigenvalues_conjugate_pairs():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((9, 9))
    ev = eigenvalues(M).eigenvalues
    np.testing.assert_allclose(np.sort_complex(ev), np.sort_complex(ev.conj()), atol=1e-10)


def test_eigenvalues_partial_spectrum_on_cap(monkeypatch):
    from types import SimpleNamespace

    from monoloop import _backend

    real = _backend.kernels.hqr_eigen
    monkeypatch.setattr(_backend, "kernels", SimpleNamespace(hqr_eigen=lambda M, cap: real(M, 1)))
    with pytest.raises(NoConvergence) as e:
        eigenvalues(np.random.default_rng(0).standard_normal((8, 8)))
    assert e.value.partial is not None and len(e.value.partial) == 8


def test_hurwitz_band():
    assert is_hurwitz([[-3.0]]) is True
    assert is_hurwitz([[1.0]]) is False
    with pytest.raises(MarginCase):
        is_hurwitz(np.zeros((2, 2)))


def test_gain_matrix():
    assert gain_matrix([[-1.0]], [[1.0]], [[0.5]]).tolist() == [[0.5]]
    np.testing.assert_allclose(gain_matrix(-np.eye(3), np.eye(3), np.eye(3)), np.eye(3))
    with pytest.raises(SingularA):
        gain_matrix([[1.0, 2.0], [2.0, 4.0]], [[1.0], [0.0]], [[1.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        gain_matrix([[-1.0]], [[1.0, 1.0]], [[1.0]])


def test_spectral_radius_examples():
    assert spectral_radius([[0.5]]) == 0.5
    assert spectral_radius([[0.0, 2.0], [0.0, 0.0]]) == 0.0


def test_power_radius_on_periodic_matrix():
    # a 2-cycle permutation: plain power iteration would oscillate
    assert power_radius([[0.0, 0.7], [0.7, 0.0]]) == pytest.approx(0.7, abs=1e-9)


def test_extended_matrices_structure():
    A = np.array([[-2.0, 1.0], [0.5, -3.0]])
    B = np.array([[1.0], [0.5]])
    C = np.array([[0.2, 1.0]])
    F, G, H, FGH = extended_matrices(A, B, C)
    np.testing.assert_allclose(FGH[:2, 2:], -B @ C)
    np.testing.assert_allclose(FGH[2:, :2], -B @ C)
    np.testing.assert_allclose(FGH - F, np.block([[np.zeros((2, 2)), -B @ C], [np.zeros((2, 4))]]))


@pytest.mark.parametrize("k", [0.5, 2.0])
def test_scalar_reports(k):
    r = small_gain_report([[-1.0]], [[1.0]], [[k]])
    assert r.rho_K == pytest.approx(k)
    assert r.hurwitz_AminusBC
    assert r.hurwitz_FGH is (k < 1) and r.hurwitz_AplusBC is (k < 1)
    assert r.gap is (k > 1)
    assert r.equivalence_consistent and r.assumptions_met
    d = json.loads(r.to_json())
    assert d["verdict"] == r.verdict


def test_gap_verdict_text():
    r = small_gain_report([[-1.0]], [[1.0]], [[2.0]])
    assert r.verdict == "small-gain fails; A−BC Hurwitz (closed loop still stable)"


def test_margin_case_skips_consistency():
    r = small_gain_report([[-1.0]], [[1.0]], [[1.0]])
    assert r.rho_margin and r.equivalence_consistent is None
    assert r.hurwitz_margins["AplusBC"] and r.hurwitz_AplusBC is None


def test_assumption_violation_reported():
    r = small_gain_report([[-1.0, -1.0], [-1.0, -3.0]], [[1.0], [0.0]], [[0.0, 1.0]])
    assert not r.assumptions_met
    assert r.verdict.startswith("assumptions unmet")


def test_random_instances_consistent():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 3))
        A, B, C = random_metzler_instance(rng, n, m, target_rho=float(rng.uniform(0.2, 2.0)))
        r = small_gain_report(A, B, C)
        if r.rho_margin:
            continue
        assert r.equivalence_consistent, r.to_dict()
        if r.hurwitz_FGH:
            assert r.hurwitz_AminusBC
        assert not r.warnings


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_rho_of_square(n, seed):
    K = np.random.default_rng(seed).standard_normal((n, n))
    rho = spectral_radius(K)
    assert spectral_radius(K @ K) == pytest.approx(rho ** 2, rel=1e-8, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2 ** 31 - 1))
def test_trace_and_determinant_identities(n, seed):
    M = np.random.default_rng(seed).standard_normal((n, n))
    ev = eigenvalues(M).eigenvalues
    assert abs(ev.sum() - np.trace(M)) <= 1e-8 * np.abs(M).sum(axis=0).max()
    det = np.linalg.det(M)
    assert abs(np.prod(ev) - det) <= 1e-6 * abs(det) + 1e-12
