"""Input/output characteristic ``k(u) = h(x_u)`` and the iteration ``u+ = k(u)``."""

from __future__ import annotations

import csv
import json
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    Diverged,
    EvalDomainError,
    NoConvergence,
    NumericalError,
)
from .integrators import IntegratorOpts, find_steady_state, newton_solve
from .order import SLACK, leq

_CACHES: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _key(v) -> tuple:
    return tuple(int(round(float(x) * 1e12)) for x in np.atleast_1d(v))


def _cache_for(model) -> dict:
    cache = _CACHES.get(model)
    if cache is None:
        cache = {}
        _CACHES[model] = cache
    return cache


def steady_state_for_input(model, u, x_seed=None, opts: IntegratorOpts | None = None):
    """``x_u`` reached from ``x_seed`` under constant ``u`` (cached)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x_seed = np.zeros(model.n) if x_seed is None else np.asarray(x_seed, dtype=float)
    cache = _cache_for(model)
    key = (_key(u), _key(x_seed))
    hit = cache.get(key)
    if hit is not None:
        return hit
    try:
        ss = find_steady_state(model, u, x_seed, opts)
    except (Diverged, EvalDomainError) as e:
        raise NoConvergence(f"characteristic undefined at u={u.tolist()}: {e}", u=u) from e
    if not ss.converged:
        raise NoConvergence(f"characteristic undefined at u={u.tolist()}: {ss.note}", u=u)
    # insert-if-absent; a concurrent writer would store the same value
    return cache.setdefault(key, ss.state)


def char_value(model, u, x_seed=None, opts: IntegratorOpts | None = None) -> np.ndarray:
    """``k(u) = h(x_u)``; raises NoConvergence when no steady state is reached."""
    return model.h(steady_state_for_input(model, u, x_seed, opts))


class CharacteristicMap:
    """``k`` with warm starts: each evaluation seeds the next steady-state search."""

    def __init__(self, model, x_seed=None, opts: IntegratorOpts | None = None):
        self.model = model
        self.opts = opts
        self.seed = np.zeros(model.n) if x_seed is None else np.asarray(x_seed, dtype=float)
        self.evaluations = 0

    def state(self, u) -> np.ndarray:
        x = steady_state_for_input(self.model, u, self.seed, self.opts)
        self.seed = x
        self.evaluations += 1
        return x

    def __call__(self, u) -> np.ndarray:
        return self.model.h(self.state(u))


# --- anti-monotonicity ------------------------------------------------------------

@dataclass
class AntiMonotoneVerdict:
    anti_monotone: bool
    grid: list
    values: list
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"anti_monotone": self.anti_monotone, "grid": self.grid,
                "values": self.values, "violations": self.violations}


def check_antimonotone_char(model, grid, opts: IntegratorOpts | None = None) -> AntiMonotoneVerdict:
    """Check ``u <= u'  =>  k(u') <= k(u)`` over every ordered pair of ``grid``."""
    k = CharacteristicMap(model, opts=opts)
    us = [np.atleast_1d(np.asarray(u, dtype=float)) for u in grid]
    ks = [k(u) for u in us]
    o = model.order_inputs
    violations = []
    for i, (u, ku) in enumerate(zip(us, ks)):
        for j, (v, kv) in enumerate(zip(us, ks)):
            if i != j and leq(o, u, v) and not leq(o, kv, ku, SLACK):
                violations.append({"u": u.tolist(), "u_prime": v.tolist(),
                                   "k_u": ku.tolist(), "k_u_prime": kv.tolist()})
    return AntiMonotoneVerdict(not violations, [u.tolist() for u in us],
                               [v.tolist() for v in ks], violations)


# --- iteration ---------------------------------------------------------------------

@dataclass
class IterationResult:
    orbit: list
    classification: str  # fixed_point | period_two | divergent | undecided
    fixed_point: np.ndarray | None = None
    period_two: tuple | None = None
    iterations: int = 0
    tol: float = 1e-9

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "fixed_point": None if self.fixed_point is None else self.fixed_point.tolist(),
            "period_two": None if self.period_two is None else [p.tolist() for p in self.period_two],
            "iterations": self.iterations,
            "tol": self.tol,
            "orbit": [u.tolist() for u in self.orbit],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def orbit_csv(self, path) -> None:
        m = len(self.orbit[0]) if self.orbit else 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["i"] + [f"u{j + 1}" for j in range(m)])
            for i, u in enumerate(self.orbit):
                w.writerow([i] + [repr(float(v)) for v in u])


def _dist(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def iterate_char(model, u0, max_iter: int = 1000, tol: float = 1e-9, bound: float = 1e9,
                 x_seed=None, opts: IntegratorOpts | None = None) -> IterationResult:
    """Run ``u+ = k(u)`` from ``u0`` and classify the orbit.

    Consecutive iterates within ``tol`` give a fixed point; ``u_{i+2}``
    within ``tol`` of ``u_i`` while ``u_{i+1}`` stays more than ``10 tol``
    away gives a period-two pair.
    """
    k = CharacteristicMap(model, x_seed, opts)
    orbit = [np.atleast_1d(np.asarray(u0, dtype=float))]
    for i in range(max_iter):
        try:
            nxt = k(orbit[-1])
        except NoConvergence as e:
            e.partial = orbit
            raise
        orbit.append(nxt)
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > bound:
            return IterationResult(orbit, "divergent", iterations=i + 1, tol=tol)
        if _dist(nxt, orbit[-2]) <= tol:
            return IterationResult(orbit, "fixed_point", fixed_point=nxt, iterations=i + 1, tol=tol)
        if len(orbit) >= 3 and _dist(nxt, orbit[-3]) <= tol and _dist(orbit[-2], orbit[-3]) > 10 * tol:
            pair = (orbit[-3], orbit[-2])
            return IterationResult(orbit, "period_two", period_two=pair, iterations=i + 1, tol=tol)
    return IterationResult(orbit, "undecided", iterations=max_iter, tol=tol)


# --- solutions of k(k(u)) = u ---------------------------------------------------------

@dataclass
class K2SolutionSet:
    solutions: list
    unique: bool
    residuals: list
    seeds: list
    undecided_seeds: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "solutions": [s.tolist() for s in self.solutions],
            "unique": self.unique,
            "residuals": self.residuals,
            "seeds": [s.tolist() for s in self.seeds],
            "undecided_seeds": [s.tolist() for s in self.undecided_seeds],
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def find_k2_solutions(model, seeds, tol: float = 1e-9, max_iter: int = 1000,
                      opts: IntegratorOpts | None = None) -> K2SolutionSet:
    """Locate solutions of ``k(k(u)) = u`` starting from ``seeds``.

    Each seed is iterated under the monotone map ``k o k``. Iteration only
    reaches attracting solutions, so the candidates are completed with Newton
    solves of ``k(k(u)) = u`` from every seed and of ``k(u) = u`` from the
    seeds and from midpoints of the solutions already found. Candidates
    closer than ``100 tol`` are merged, keeping the first one found.
    """
    seeds = [np.atleast_1d(np.asarray(s, dtype=float)) for s in seeds]
    found: list[np.ndarray] = []
    undecided = []
    notes = []
    radius = 100 * tol

    def add(v):
        for s in found:
            if _dist(s, v) <= radius:
                return
        found.append(np.asarray(v, dtype=float))

    kk = CharacteristicMap(model, opts=opts)

    def k2(v):
        return kk(kk(v))

    for s in seeds:
        v = s
        try:
            for _ in range(max_iter):
                nv = k2(v)
                if _dist(nv, v) <= tol:
                    add(nv)
                    break
                v = nv
            else:
                undecided.append(s)
        except NoConvergence as e:
            undecided.append(s)
            notes.append(f"seed {s.tolist()}: {e}")

    def try_newton(G, start, label):
        try:
            v, _, _ = newton_solve(G, start, tol=tol * 1e-2, max_iter=40)
        except NumericalError as e:
            notes.append(f"{label} from {np.asarray(start).tolist()}: {type(e).__name__}")
            return
        add(v)

    for s in seeds:
        try_newton(lambda v: k2(v) - v, s, "newton k2")
    starts = list(seeds)
    for i in range(len(found)):
        for j in range(i + 1, len(found)):
            starts.append(0.5 * (found[i] + found[j]))
    for s in starts:
        try_newton(lambda v: kk(v) - v, s, "newton k")

    verified, residuals = [], []
    for v in found:
        try:
            res = _dist(k2(v), v)
        except NoConvergence:
            continue
        if res <= 10 * tol:
            verified.append(v)
            residuals.append(res)
    return K2SolutionSet(verified, len(verified) == 1, residuals, seeds, undecided, notes)


def default_u_seeds(model, count: int = 5, rng_seed: int = 0, state_box=(0.0, 1.0)) -> list:
    """Input seeds spread over the range of ``h`` on random states."""
    rng = np.random.default_rng(rng_seed)
    vals = []
    for _ in range(64):
        x = rng.uniform(state_box[0], state_box[1], model.n)
        try:
            vals.append(model.h(x))
        except EvalDomainError:
            continue
    if not vals:
        return [np.zeros(model.m)]
    arr = np.vstack(vals)
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    return [lo + (hi - lo) * t for t in np.linspace(0.0, 1.0, count)]
