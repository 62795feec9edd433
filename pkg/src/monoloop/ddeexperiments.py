"""Delayed negative feedback ``x'(t) = f(x(t), h(x(t - r)))`` and pseudo-oscillations.

With a period-two pair ``k(u0) = u1``, ``k(u1) = u0`` and constant history
``x0`` (where ``h(x0) = u0``), each delay interval drives the state close to
the steady state of the previous interval's input, so for long delays the
trajectory shuttles between ``x0`` and ``x1``. The experiment logs those
approaches; it does not claim a periodic orbit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .characteristic import char_value, steady_state_for_input
from .errors import NoConvergence, PairNotPeriodTwo
from .integrators import IntegratorOpts, Trajectory, integrate, integrate_dde


@dataclass(frozen=True)
class DelayProblem:
    """``model`` closed through its output with delay ``r``."""

    model: object
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"delay must be positive, got {self.r}")

    def integrate(self, x0, t_end: float, opts: IntegratorOpts | None = None) -> Trajectory:
        """Integrate from the constant history ``x(t) = x0`` on ``[-r, 0]``."""
        return integrate_dde(self.model, self.r, x0, (0.0, t_end), opts)


def delay_closed_loop(model, r: float) -> DelayProblem:
    return DelayProblem(model, float(r))


def settling_time(model, x_start, u, target, band: float, horizon: float = 1e3,
                  step: float = 0.01) -> float:
    """Last time the open-loop run from ``x_start`` under ``u`` is farther than ``band`` from ``target``."""
    tr = integrate(model, x_start, u, (0.0, horizon), IntegratorOpts(method="rk4_fixed", step=step))
    d = np.max(np.abs(tr.states - np.asarray(target)), axis=1)
    outside = np.nonzero(d > band)[0]
    if outside.size == 0:
        return 0.0
    if outside[-1] == len(d) - 1:
        raise NoConvergence(f"open loop did not settle within {horizon}")
    return float(tr.times[outside[-1] + 1])


def delay_settles(model, r: float, x0, t_end: float, tol: float = 1e-4,
                  opts: IntegratorOpts | None = None) -> tuple[bool, float]:
    """Whether ``|x| < tol`` over the last delay interval; also returns that peak."""
    tr = delay_closed_loop(model, r).integrate(x0, t_end, opts)
    if tr.status == "diverged":
        return False, float("inf")
    tail = tr.states[tr.times >= t_end - r]
    peak = float(np.max(np.abs(tail)))
    return peak < tol, peak


@dataclass
class OscillationReport:
    r: float
    x0: np.ndarray
    x1: np.ndarray
    delta: float
    debounce: float
    t_max: float
    visits_required: int
    visits: list  # (entry time, target index, closest distance in the dwell)
    min_distance: list
    alternating: bool
    detected: bool
    first_visit_distance: float
    notes: list = field(default_factory=list)
    trajectory: Trajectory | None = field(default=None, repr=False)

    def counts(self) -> list:
        return [sum(1 for v in self.visits if v[1] == i) for i in (0, 1)]

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "x0": self.x0.tolist(),
            "x1": self.x1.tolist(),
            "delta": self.delta,
            "debounce": self.debounce,
            "t_max": self.t_max,
            "visits_required": self.visits_required,
            "visits": [list(v) for v in self.visits],
            "visit_counts": self.counts(),
            "min_distance": self.min_distance,
            "alternating": self.alternating,
            "pseudo_oscillation_detected": self.detected,
            "first_visit_distance": self.first_visit_distance,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def verify_pair(model, u0, u1, tol: float = 1e-6):
    """Raise PairNotPeriodTwo unless ``k`` swaps ``u0`` and ``u1`` (and they differ)."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    if np.max(np.abs(u0 - u1)) <= 10 * tol:
        raise PairNotPeriodTwo(f"u0 and u1 coincide within {10 * tol}: a fixed point, not a pair")
    try:
        r0 = float(np.max(np.abs(char_value(model, u0) - u1)))
        r1 = float(np.max(np.abs(char_value(model, u1) - u0)))
    except NoConvergence as e:
        raise PairNotPeriodTwo(f"characteristic undefined on the pair: {e}") from e
    if max(r0, r1) > tol:
        raise PairNotPeriodTwo(f"k does not swap the pair (residuals {r0:.3g}, {r1:.3g})")
    return u0, u1


def log_visits(times, states, targets, delta: float, debounce: float):
    """Debounced entries into the ``delta`` balls (sup norm) around ``targets``.

    A dwell starts when the state enters a ball after ``t = 0`` and ends
    once it has stayed outside for longer than ``debounce``. Returns the
    visit log and the closest approach to each target after first leaving
    its ball.
    """
    dist = np.stack([np.max(np.abs(states - t), axis=1) for t in targets], axis=1)
    min_d = []
    for j in range(len(targets)):
        left = np.nonzero(dist[:, j] > delta)[0]
        min_d.append(float(dist[left[0]:, j].min()) if left.size else 0.0)
    visits = []
    for j in range(len(targets)):
        inside = dist[:, j] <= delta
        dwell_start = None
        last_inside = -np.inf
        best = np.inf
        # the initial history sits in its own ball; that is not an entry
        armed = not inside[0]
        for i in range(len(times)):
            t = times[i]
            if inside[i]:
                if not armed:
                    last_inside = t
                    continue
                if dwell_start is None or t - last_inside > debounce:
                    if dwell_start is not None:
                        visits.append((dwell_start, j, best))
                    dwell_start, best = t, np.inf
                best = min(best, dist[i, j])
                last_inside = t
            else:
                armed = True
        if dwell_start is not None:
            visits.append((dwell_start, j, best))
    visits.sort()
    return [(float(t), int(j), float(d)) for t, j, d in visits], min_d


def pseudo_oscillation_experiment(model, u0, u1, r: float | None = None,
                                  visits_required: int = 3, delta: float | None = None,
                                  t_max: float | None = None, opts: IntegratorOpts | None = None,
                                  pair_tol: float = 1e-6) -> OscillationReport:
    """Run the delayed loop from constant history ``x0`` and log approaches to ``x0`` and ``x1``.

    ``x0`` solves ``h(x0) = u0`` (it is the steady state under ``u1``) and
    ``x1`` is the steady state under ``u0``. Defaults: ``delta`` is 10 % of
    ``|x0 - x1|_inf``, ``r = max(20, 10 x settling time)``, ``t_max = 20 r``,
    debounce window ``r / 100``.
    """
    u0, u1 = verify_pair(model, u0, u1, pair_tol)
    x0 = steady_state_for_input(model, u1)
    x1 = steady_state_for_input(model, u0)
    gap = float(np.max(np.abs(x0 - x1)))
    delta = 0.1 * gap if delta is None else float(delta)
    notes = []
    if r is None:
        ts = settling_time(model, x0, u0, x1, 0.01 * gap)
        r = max(20.0, 10.0 * ts)
        notes.append(f"r chosen as max(20, 10 x settling time {ts!r})")
    r = float(r)
    t_max = 20.0 * r if t_max is None else float(t_max)
    debounce = r / 100.0
    tr = delay_closed_loop(model, r).integrate(x0, t_max, opts)
    if tr.status == "diverged":
        notes.append(f"trajectory diverged at t={tr.times[-1]!r}")
    visits, min_d = log_visits(tr.times, tr.states, [x0, x1], delta, debounce)
    alternating = all(a[1] != b[1] for a, b in zip(visits, visits[1:]))
    if not alternating:
        notes.append("consecutive visits hit the same target")
    counts = [sum(1 for v in visits if v[1] == i) for i in (0, 1)]
    detected = alternating and min(counts) >= visits_required
    i_r = int(np.searchsorted(tr.times, r))
    first = float(np.max(np.abs(tr.states[min(i_r, len(tr.times) - 1)] - x1)))
    return OscillationReport(r, x0, x1, delta, debounce, t_max, visits_required, visits, min_d,
                             alternating, detected, first, notes, tr)


def oscillation_sweep(model, u0, u1, rs, **kwargs) -> list:
    """One report per delay in ``rs`` (run in order; results are independent)."""
    return [pseudo_oscillation_experiment(model, u0, u1, r=float(r), **kwargs) for r in rs]
