"""Small-gain analysis for linear monotone systems ``x' = Ax + Bu, y = -Cx``."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _backend
from .errors import DimensionMismatch, MarginCase, NoConvergence, SingularA
from .extended import extended_blocks
from .order import OrthantOrder

HURWITZ_BAND = 1e-9
RHO_BAND = 1e-6


def _square(M, what="matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {M.shape}")
    return M


def _signs(signs, n) -> np.ndarray:
    if signs is None:
        return np.ones(n)
    arr = np.asarray(signs.signs if isinstance(signs, OrthantOrder) else signs, dtype=float)
    if arr.shape != (n,):
        raise DimensionMismatch(f"{arr.size} signs for dimension {n}")
    return arr


def is_quasi_monotone(A, signs=None) -> bool:
    """``s_i s_j A_ij >= 0`` off the diagonal (Metzler when all signs are +)."""
    A = _square(A)
    s = _signs(signs, A.shape[0])
    S = np.outer(s, s) * A
    np.fill_diagonal(S, 0.0)
    return bool(np.all(S >= 0))


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray  # complex
    max_real: float
    iterations: int
    converged: bool = True


def eigenvalues(M) -> EigenResult:
    """Balance, Hessenberg reduction and Francis double-shift QR.

    Raises NoConvergence (with the partial spectrum in ``partial``) once
    ``30 n`` QR iterations have been spent.
    """
    M = _square(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    n = M.shape[0]
    wr, wi, its, ok = _backend.kernels.hqr_eigen(np.ascontiguousarray(M), 30 * max(n, 1))
    ev = np.asarray(wr) + 1j * np.asarray(wi)
    if not ok:
        raise NoConvergence(f"QR iteration did not converge within {30 * n} iterations",
                            partial=ev)
    order = np.lexsort((ev.imag, ev.real))
    ev = ev[order]
    max_real = float(np.max(ev.real)) if n else -np.inf
    return EigenResult(ev, max_real, int(its))


def is_hurwitz(M) -> bool:
    r = eigenvalues(M).max_real
    if r < -HURWITZ_BAND:
        return True
    if r > HURWITZ_BAND:
        return False
    raise MarginCase(f"max real part {r!r} within +-{HURWITZ_BAND}", value=r)


def _check_abc(A, B, C):
    A = _square(A, "A")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if B.shape[0] != n or C.shape[1] != n or C.shape[0] != B.shape[1]:
        raise DimensionMismatch(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}")
    return A, B, C


def gain_matrix(A, B, C) -> np.ndarray:
    """``K = -C A^{-1} B`` through an LU solve."""
    A, B, C = _check_abc(A, B, C)
    with warnings.catch_warnings():
        # exact zero pivots are handled by the threshold below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    scale = np.linalg.norm(A, 1)
    if scale == 0 or np.min(np.abs(np.diag(lu))) <= 1e-12 * scale:
        raise SingularA("A is singular to working precision")
    return -C @ scipy.linalg.lu_solve((lu, piv), B)


def power_radius(K, iters: int = 500) -> float:
    """Perron root of a nonnegative ``K`` by power iteration on ``K + I``."""
    K = _square(K)
    P = K + np.eye(K.shape[0])
    v = np.ones(K.shape[0])
    lam = 1.0
    for _ in range(iters):
        w = P @ v
        lam = float(np.linalg.norm(w, np.inf) / np.linalg.norm(v, np.inf))
        v = w / np.linalg.norm(w, np.inf)
    return lam - 1.0


def spectral_radius(K) -> float:
    K = _square(K)
    return float(np.max(np.abs(eigenvalues(K).eigenvalues))) if K.size else 0.0


def extended_matrices(A, B, C):
    """``(F, G, H, F + GH)`` of the doubled linear system."""
    A, B, C = _check_abc(A, B, C)
    return extended_blocks(A, B, C)


def _hurwitz_flag(M):
    """``(flag, margin)``; ``flag`` is None inside the dead band."""
    try:
        return is_hurwitz(M), False
    except MarginCase:
        return None, True


@dataclass
class SmallGainReport:
    K: np.ndarray
    rho_K: float
    rho_K2: float
    hurwitz_A: bool | None
    hurwitz_FGH: bool | None
    hurwitz_AminusBC: bool | None
    hurwitz_AplusBC: bool | None
    equivalence_consistent: bool | None
    rho_margin: bool
    hurwitz_margins: dict
    gap: bool
    assumptions_met: bool
    warnings: list = field(default_factory=list)
    max_real: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.rho_margin:
            return f"margin case: rho(K) = {self.rho_K!r} is within {RHO_BAND} of 1"
        prefix = "" if self.assumptions_met else "assumptions unmet; "
        if self.rho_K < 1:
            return prefix + "small-gain holds; closed loop globally stable for every delay"
        if self.gap:
            return prefix + "small-gain fails; A−BC Hurwitz (closed loop still stable)"
        return prefix + "small-gain fails; closed loop not certified stable"

    def to_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "rho_K": self.rho_K,
            "rho_K2": self.rho_K2,
            "hurwitz_A": self.hurwitz_A,
            "hurwitz_FGH": self.hurwitz_FGH,
            "hurwitz_AminusBC": self.hurwitz_AminusBC,
            "hurwitz_AplusBC": self.hurwitz_AplusBC,
            "equivalence_consistent": self.equivalence_consistent,
            "rho_margin": self.rho_margin,
            "hurwitz_margins": self.hurwitz_margins,
            "gap": self.gap,
            "assumptions_met": self.assumptions_met,
            "max_real": self.max_real,
            "warnings": self.warnings,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def small_gain_report(A, B, C, signs=None, input_signs=None) -> SmallGainReport:
    """Evaluate every test of the linear small-gain chain.

    ``rho(K) < 1``, ``F + GH`` Hurwitz and ``A - BC``, ``A + BC`` both
    Hurwitz should agree for quasi-monotone Hurwitz ``A`` with
    sign-compatible ``B`` and ``C``. Unmet assumptions are reported, not
    raised; the comparison is skipped for margin cases.
    """
    A, B, C = _check_abc(A, B, C)
    n, m = A.shape[0], B.shape[1]
    s_x = _signs(signs, n)
    s_u = _signs(input_signs, m)
    notes = []

    K = gain_matrix(A, B, C)
    rho = spectral_radius(K)
    rho2 = spectral_radius(K @ K)
    F, G, H, FGH = extended_matrices(A, B, C)
    BC = B @ C
    mats = {"A": A, "FGH": FGH, "AminusBC": A - BC, "AplusBC": A + BC}
    flags, margins, max_real = {}, {}, {}
    for key, M in mats.items():
        flags[key], margins[key] = _hurwitz_flag(M)
        max_real[key] = eigenvalues(M).max_real

    # B maps the input order into the state order, C the state order into the input order
    b_ok = bool(np.all(np.outer(s_x, s_u) * B >= 0))
    c_ok = bool(np.all(np.outer(s_u, s_x) * C >= 0))
    quasi = is_quasi_monotone(A, s_x)
    assumptions = quasi and bool(flags["A"]) and b_ok and c_ok
    if not quasi:
        notes.append("A is not quasi-monotone for the given signs")
    if flags["A"] is not True:
        notes.append("A is not Hurwitz")
    if not (b_ok and c_ok):
        notes.append("B or C is not sign-compatible with the orders")
    if assumptions:
        Ks = np.outer(s_u, s_u) * K
        if np.any(Ks < -1e-12 * max(1.0, np.max(np.abs(K)))):
            notes.append("K has negative entries in the input order")
        elif K.size:
            p = power_radius(np.abs(Ks))
            if abs(p - rho) > 1e-6 * max(1.0, rho):
                notes.append(f"power iteration radius {p!r} disagrees with QR radius {rho!r}")

    rho_margin = abs(rho - 1.0) < RHO_BAND
    consistent = None
    if not rho_margin and not any(margins.values()):
        small = rho < 1
        consistent = small == flags["FGH"] == (flags["AminusBC"] and flags["AplusBC"])
    gap = flags["AminusBC"] is True and flags["AplusBC"] is False
    return SmallGainReport(
        K=K, rho_K=rho, rho_K2=rho2,
        hurwitz_A=flags["A"], hurwitz_FGH=flags["FGH"],
        hurwitz_AminusBC=flags["AminusBC"], hurwitz_AplusBC=flags["AplusBC"],
        equivalence_consistent=consistent, rho_margin=rho_margin,
        hurwitz_margins=margins, gap=gap, assumptions_met=assumptions,
        warnings=notes, max_real=max_real,
    )


def random_metzler_instance(rng, n: int, m: int, target_rho: float | None = None):
    """Random Metzler-Hurwitz ``A`` with nonnegative ``B``, ``C``.

    ``A = Q - (rho(Q) + d) I`` with ``Q ~ U(0, 1)`` entrywise and
    ``d ~ U(0.1, 1)``. When ``target_rho`` is given, ``C`` is rescaled so
    that ``rho(K)`` equals it.
    """
    Q = rng.uniform(0.0, 1.0, (n, n))
    d = rng.uniform(0.1, 1.0)
    A = Q - (spectral_radius(Q) + d) * np.eye(n)
    B = rng.uniform(0.0, 1.0, (n, m))
    C = rng.uniform(0.0, 1.0, (m, n))
    if target_rho is not None:
        rho = spectral_radius(gain_matrix(A, B, C))
        if rho > 0:
            C = C * (target_rho / rho)
    return A, B, C
