"""Orthant partial orders and empirical monotonicity checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput, IntegrationFailure, MonoloopError

SLACK = 1e-7


@dataclass(frozen=True)
class OrthantOrder:
    """Coordinatewise order after per-coordinate sign flips.

    ``a <= b`` iff ``signs[i] * (b[i] - a[i]) >= 0`` for every ``i``.
    """

    signs: tuple[int, ...]

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (1, -1) for s in signs):
            raise ValueError(f"order signs must be +1/-1, got {self.signs}")
        object.__setattr__(self, "signs", signs)

    @classmethod
    def positive(cls, dim: int) -> "OrthantOrder":
        return cls((1,) * dim)

    @classmethod
    def from_text(cls, tokens) -> "OrthantOrder":
        table = {"+": 1, "-": -1, "+1": 1, "-1": -1}
        try:
            return cls(tuple(table[t] for t in tokens))
        except KeyError as e:
            raise ValueError(f"bad order sign {e.args[0]!r}") from None

    def __len__(self):
        return len(self.signs)

    @property
    def dim(self) -> int:
        return len(self.signs)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.signs, dtype=float)

    def text(self) -> str:
        return " ".join("+" if s > 0 else "-" for s in self.signs)

    def reversed(self) -> "OrthantOrder":
        return OrthantOrder(tuple(-s for s in self.signs))

    def product(self, other: "OrthantOrder") -> "OrthantOrder":
        return OrthantOrder(self.signs + other.signs)

    def leq(self, a, b, slack: float = 0.0) -> bool:
        return leq(self, a, b, slack)


def _check_dim(order: OrthantOrder, *vecs):
    out = []
    for v in vecs:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.shape != (order.dim,):
            raise DimensionMismatch(f"vector of shape {v.shape} for order of dim {order.dim}")
        out.append(v)
    return out


def leq(order: OrthantOrder, a, b, slack: float = 0.0) -> bool:
    a, b = _check_dim(order, a, b)
    return bool(np.all(order.array * (b - a) >= -slack))


def reverse(order: OrthantOrder) -> OrthantOrder:
    return order.reversed()


def product(o1: OrthantOrder, o2: OrthantOrder) -> OrthantOrder:
    return o1.product(o2)


def bounding_rectangle(order: OrthantOrder, points):
    """Tight ``(lo, hi)`` with ``lo <= p <= hi`` in ``order`` for every point."""
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if not pts:
        raise EmptyInput("bounding_rectangle needs at least one point")
    pts = _check_dim(order, *pts)
    arr = np.vstack(pts)
    mn, mx = arr.min(axis=0), arr.max(axis=0)
    pos = order.array > 0
    return np.where(pos, mn, mx), np.where(pos, mx, mn)


# --- empirical monotonicity ----------------------------------------------------

@dataclass
class MonotonicityVerdict:
    system_monotone: bool
    output_class: str  # "monotone" | "anti-monotone" | "neither"
    failures: list = field(default_factory=list)
    trials: int = 0
    slack: float = SLACK

    def to_dict(self) -> dict:
        return {
            "system_monotone": self.system_monotone,
            "output_class": self.output_class,
            "failures": self.failures,
            "trials": self.trials,
            "slack": self.slack,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _ordered_pair(rng, order: OrthantOrder, box):
    """Two points of ``box`` with ``a <= b`` in ``order``."""
    p = rng.uniform(box[0], box[1], (2, order.dim))
    lo, hi = p.min(axis=0), p.max(axis=0)
    pos = order.array > 0
    return np.where(pos, lo, hi), np.where(pos, hi, lo)


def _classify_output(model, pairs) -> str:
    mono = anti = True
    o_in = model.order_inputs
    for a, b in pairs:
        ha, hb = model.h(a), model.h(b)
        if not leq(o_in, ha, hb, SLACK):
            mono = False
        if not leq(o_in, hb, ha, SLACK):
            anti = False
        if not (mono or anti):
            return "neither"
    return "monotone" if mono else "anti-monotone"


def check_monotone(model, trials: int = 50, horizon: float = 10.0, rng_seed=0,
                   state_box=(0.0, 1.0), input_box=(0.0, 1.0), step: float = 0.01) -> MonotonicityVerdict:
    """Falsification test for monotonicity of ``model`` and its output map.

    Each trial draws an ordered pair of initial states and an ordered pair of
    inputs, integrates both with the same fixed RK4 grid and checks the order
    at every sample time (slack 1e-7). Even trials use constant inputs, odd
    trials piecewise-constant inputs with 4 segments. The output map is
    classified on the ordered state pairs visited by the trials.
    """
    from .integrators import IntegratorOpts, integrate

    rng = np.random.default_rng(rng_seed)
    opts = IntegratorOpts(method="rk4_fixed", step=step)
    o_x, o_u = model.order_states, model.order_inputs
    failures = []
    state_pairs = []
    for trial in range(trials):
        xa, xb = _ordered_pair(rng, o_x, state_box)
        if trial % 2 == 0 or model.m == 0:
            ua, ub = _ordered_pair(rng, o_u, input_box)
            sig_a, sig_b = ua, ub
        else:
            times = np.sort(rng.uniform(0.0, horizon, 3))
            segs = [_ordered_pair(rng, o_u, input_box) for _ in range(4)]
            starts = np.concatenate([[0.0], times])
            sig_a = [(float(t), s[0]) for t, s in zip(starts, segs)]
            sig_b = [(float(t), s[1]) for t, s in zip(starts, segs)]
        try:
            ta = integrate(model, xa, sig_a, (0.0, horizon), opts)
            tb = integrate(model, xb, sig_b, (0.0, horizon), opts)
        except MonoloopError as e:
            raise IntegrationFailure(f"trial {trial}: {e}",
                                     sample={"x0": [xa.tolist(), xb.tolist()]}) from e
        if ta.status == "diverged" or tb.status == "diverged":
            # ordered pairs are only compared where both are finite
            k = min(len(ta.times), len(tb.times))
        else:
            k = len(ta.times)
        diff = (tb.states[:k] - ta.states[:k]) * o_x.array
        bad = np.nonzero(np.any(diff < -SLACK, axis=1))[0]
        if bad.size:
            i = int(bad[0])
            failures.append({
                "trial": trial,
                "time": float(ta.times[i]),
                "x_low": ta.states[i].tolist(),
                "x_high": tb.states[i].tolist(),
            })
        step_pick = max(1, k // 8)
        state_pairs.append((xa, xb))
        state_pairs.extend((ta.states[i], tb.states[i]) for i in range(0, k, step_pick)
                           if leq(o_x, ta.states[i], tb.states[i]))
    output_class = _classify_output(model, state_pairs) if model.m else "monotone"
    return MonotonicityVerdict(
        system_monotone=not failures,
        output_class=output_class,
        failures=failures,
        trials=trials,
    )
