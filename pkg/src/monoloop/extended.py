"""The doubled system ``x' = f(x, u), z' = f(z, h(x)), y = h(z)`` and its closed loops.

Under the order ``(x, z) <= (x', z')  iff  x <= x' and z >= z'`` the doubled
system is monotone with a monotone output whenever ``h`` is anti-monotone,
so uniqueness of its closed-loop equilibrium yields convergence of the
negative feedback loop ``x' = f(x, h(x))`` (restrict to the diagonal).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .characteristic import K2SolutionSet, default_u_seeds, find_k2_solutions, steady_state_for_input
from .errors import EvalDomainError, MonoloopError, NoConvergence, NumericalError
from .expr import rename, substitute, var
from .integrators import IntegratorOpts, integrate, newton_solve
from .model import ModelDef, linear_model
from .order import OrthantOrder, bounding_rectangle, leq

VERDICT_CONVERGENT = "globally convergent"
VERDICT_UNVERIFIED = "unique equilibrium, boundedness unverified"
VERDICT_MULTIPLE = "multiple equilibria: small-gain condition fails, no convergence claim"
VERDICT_NONE = "no equilibrium found"


def _names(model, suffix):
    return {s: f"{s}_{suffix}" for s in model.states}


def build_closed_loop(model: ModelDef) -> ModelDef:
    """Autonomous ``x' = f(x, h(x))``."""
    if model.linear is not None:
        lin = model.linear
        return linear_model(lin.A - lin.B @ lin.C, np.zeros((model.n, 0)), np.zeros((0, model.n)),
                            name=f"{model.name}_closed", states=model.states,
                            order_states=model.order_states)
    feedback = dict(zip(model.inputs, model.outputs))
    dyn = tuple(substitute(e, feedback) for e in model.dynamics)
    return ModelDef(name=f"{model.name}_closed", states=model.states, inputs=(),
                    params=model.params, dynamics=dyn, outputs=(),
                    order_states=model.order_states)


def extended_order(model: ModelDef) -> OrthantOrder:
    return model.order_states.product(model.order_states.reversed())


@dataclass(frozen=True)
class ExtendedModel:
    base: ModelDef
    model: ModelDef

    @property
    def order(self) -> OrthantOrder:
        return self.model.order_states

    @property
    def n(self) -> int:
        return self.model.n


def _doubled(model: ModelDef, closed: bool):
    nx, nz = _names(model, "x"), _names(model, "z")
    h_x = [rename(e, nx) for e in model.outputs]
    h_z = [rename(e, nz) for e in model.outputs]
    x_in = dict(zip(model.inputs, h_z)) if closed else {}
    z_in = dict(zip(model.inputs, h_x))
    dyn_x = [substitute(e, {**{s: var(nx[s]) for s in model.states}, **x_in}) for e in model.dynamics]
    dyn_z = [substitute(e, {**{s: var(nz[s]) for s in model.states}, **z_in}) for e in model.dynamics]
    states = tuple(nx[s] for s in model.states) + tuple(nz[s] for s in model.states)
    return states, tuple(dyn_x + dyn_z), tuple(h_z)


def extended_blocks(A, B, C):
    """``F, G, H`` and ``F + GH`` for ``f = Ax + Bu``, ``h = -Cx``."""
    A, B, C = (np.asarray(M, dtype=float) for M in (A, B, C))
    n, m = A.shape[0], B.shape[1]
    BC = B @ C
    Z = np.zeros((n, n))
    F = np.block([[A, Z], [-BC, A]])
    G = np.vstack([B, np.zeros((n, m))])
    H = np.hstack([np.zeros((m, n)), -C])
    return F, G, H, F + G @ H


def build_extended_open(model: ModelDef) -> ExtendedModel:
    order = extended_order(model)
    if model.linear is not None:
        lin = model.linear
        F, G, H, _ = extended_blocks(lin.A, lin.B, lin.C)
        states = tuple(f"{s}_x" for s in model.states) + tuple(f"{s}_z" for s in model.states)
        ext = linear_model(F, G, -H, name=f"{model.name}_ext", states=states,
                           inputs=model.inputs, order_states=order,
                           order_inputs=model.order_inputs)
        return ExtendedModel(model, ext)
    states, dyn, out = _doubled(model, closed=False)
    ext = ModelDef(name=f"{model.name}_ext", states=states, inputs=model.inputs,
                   params=model.params, dynamics=dyn, outputs=out, order_states=order,
                   order_inputs=model.order_inputs)
    return ExtendedModel(model, ext)


def build_extended_closed(model: ModelDef) -> ModelDef:
    """Autonomous ``x' = f(x, h(z)), z' = f(z, h(x))``."""
    order = extended_order(model)
    if model.linear is not None:
        lin = model.linear
        *_, FGH = extended_blocks(lin.A, lin.B, lin.C)
        states = tuple(f"{s}_x" for s in model.states) + tuple(f"{s}_z" for s in model.states)
        n2 = 2 * model.n
        return linear_model(FGH, np.zeros((n2, 0)), np.zeros((0, n2)),
                            name=f"{model.name}_ext_closed", states=states, order_states=order)
    states, dyn, _ = _doubled(model, closed=True)
    return ModelDef(name=f"{model.name}_ext_closed", states=states, inputs=(),
                    params=model.params, dynamics=dyn, outputs=(), order_states=order)


# --- boundedness ---------------------------------------------------------------------

@dataclass
class BoundednessVerdict:
    bounded: bool
    trials: int
    horizon: float
    bound: float
    max_norm: float
    failures: list = field(default_factory=list)
    h_bounded: bool = False
    rectangle: tuple | None = None
    sandwich: dict | None = None

    def to_dict(self) -> dict:
        return {
            "bounded": self.bounded,
            "trials": self.trials,
            "horizon": self.horizon,
            "bound": self.bound,
            "max_norm": self.max_norm,
            "failures": self.failures,
            "h_bounded": self.h_bounded,
            "rectangle": None if self.rectangle is None else [r.tolist() for r in self.rectangle],
            "sandwich": self.sandwich,
        }


def _h_looks_bounded(model, xs) -> bool:
    def hmax(scale):
        vals = [np.max(np.abs(model.h(scale * x))) for x in xs]
        return max(vals) if vals else 0.0
    try:
        base = max(hmax(1.0), hmax(10.0))
        far = max(hmax(1e3), hmax(1e6))
    except (EvalDomainError, OverflowError):
        return False
    return bool(np.isfinite(far) and far <= 1.5 * base + 1e-12)


def check_boundedness(model: ModelDef, trials: int = 20, horizon: float = 50.0,
                      bound: float = 1e6, rng_seed=0, ic_box=(0.0, 1.0),
                      step: float = 0.01) -> BoundednessVerdict:
    """Sample the doubled closed loop and test that it stays within ``bound``.

    When ``h`` looks bounded, also reports the input rectangle covering every
    sampled output and checks that both halves of each sampled trajectory
    stay between the open-loop solutions driven by its two corners.
    """
    ext = build_extended_closed(model)
    rng = np.random.default_rng(rng_seed)
    opts = IntegratorOpts(method="rk4_fixed", step=step, divergence_norm_bound=bound)
    n = model.n
    runs, failures, ics = [], [], []
    max_norm = 0.0
    for i in range(trials):
        xi0 = rng.uniform(ic_box[0], ic_box[1], 2 * n)
        ics.append(xi0)
        try:
            tr = integrate(ext, xi0, None, (0.0, horizon), opts)
        except NumericalError as e:
            failures.append({"trial": i, "xi0": xi0.tolist(), "error": str(e)})
            continue
        peak = float(np.max(np.abs(tr.states)))
        max_norm = max(max_norm, peak)
        if tr.status == "diverged" or peak > bound:
            failures.append({"trial": i, "xi0": xi0.tolist(), "t": float(tr.times[-1]),
                             "norm": peak})
        else:
            runs.append(tr)
    verdict = BoundednessVerdict(not failures, trials, horizon, bound, max_norm, failures)
    if model.m == 0 or not runs:
        return verdict
    samples = [s for tr in runs for s in tr.states[::10]]
    halves = [s[:n] for s in samples] + [s[n:] for s in samples]
    verdict.h_bounded = _h_looks_bounded(model, [x for x in np.array(ics)[:, :n]] + halves[:50])
    if not verdict.h_bounded:
        return verdict
    # every closed-loop input is some h(x) or h(z) along the runs
    hvals = [model.h(s[:n]) for tr in runs for s in tr.states] + \
            [model.h(s[n:]) for tr in runs for s in tr.states]
    u_lo, u_hi = bounding_rectangle(model.order_inputs, hvals)
    verdict.rectangle = (u_lo, u_hi)
    x_lo, x_hi = bounding_rectangle(model.order_states, [ic[:n] for ic in ics] + [ic[n:] for ic in ics])
    oopts = IntegratorOpts(method="rk4_fixed", step=step)
    lower = integrate(model, x_lo, u_lo, (0.0, horizon), oopts)
    upper = integrate(model, x_hi, u_hi, (0.0, horizon), oopts)
    holds = True
    o = model.order_states
    for tr in runs:
        for k in range(0, len(tr.times), 10):
            for part in (tr.states[k, :n], tr.states[k, n:]):
                if not (leq(o, lower.states[k], part, 1e-7) and leq(o, part, upper.states[k], 1e-7)):
                    holds = False
                    break
    verdict.sandwich = {
        "lower_final": lower.final.tolist(),
        "upper_final": upper.final.tolist(),
        "lower_initial": x_lo.tolist(),
        "upper_initial": x_hi.tolist(),
        "holds": holds,
    }
    return verdict


# --- equilibria of the doubled closed loop -------------------------------------------

@dataclass
class EquilibriumReport:
    equilibria: list  # dicts with x, z, residual, diagonal
    unique: bool
    verdict: str
    bounded_check: bool | None
    seeds_tried: int
    seeds_failed: int
    swap_consistent: bool
    notes: list = field(default_factory=list)

    @property
    def converges_to(self):
        if self.verdict == VERDICT_CONVERGENT:
            return np.asarray(self.equilibria[0]["x"])
        return None

    def to_dict(self) -> dict:
        return {
            "unique": self.unique,
            "verdict": self.verdict,
            "bounded_check": self.bounded_check,
            "equilibria": self.equilibria,
            "seeds_tried": self.seeds_tried,
            "seeds_failed": self.seeds_failed,
            "swap_consistent": self.swap_consistent,
            "coverage": "sampling-based: finite multistart, not a global enumeration",
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def find_extended_equilibria(model: ModelDef, n_random: int = 32, tol: float = 1e-10,
                             rng_seed=0, seed_box=None, k2: K2SolutionSet | None = None,
                             boundedness: BoundednessVerdict | None = None,
                             u_seeds=None) -> EquilibriumReport:
    """Multistart Newton on ``f(x, h(z)) = 0, f(z, h(x)) = 0``.

    Seeds are ``n_random`` uniform draws plus every pair
    ``(x_{u_i}, x_{u_j})`` of steady states attached to solutions of
    ``k(k(u)) = u``. The convergence verdict is only issued when the
    equilibrium is unique and the boundedness sampling passed.
    """
    ext = build_extended_closed(model)
    n = model.n
    rng = np.random.default_rng(rng_seed)
    notes = []

    char_states = []
    if model.m:
        if k2 is None:
            try:
                k2 = find_k2_solutions(model, u_seeds if u_seeds is not None else default_u_seeds(model))
            except MonoloopError as e:
                notes.append(f"k2 solutions unavailable: {e}")
        if k2 is not None:
            for u in k2.solutions:
                try:
                    char_states.append(steady_state_for_input(model, u))
                except NoConvergence as e:
                    notes.append(str(e))
    if seed_box is None:
        if char_states:
            arr = np.vstack(char_states)
            lo, hi = arr.min(), arr.max()
            w = max(hi - lo, 1.0)
            seed_box = (lo - 0.5 * w, hi + 0.5 * w)
        else:
            seed_box = (-1.0, 1.0)
    seeds = [rng.uniform(seed_box[0], seed_box[1], 2 * n) for _ in range(n_random)]
    seeds += [np.concatenate([a, b]) for a in char_states for b in char_states]

    raw, failed = [], 0
    for s in seeds:
        try:
            xi, res, _ = newton_solve(ext.f, s, tol=tol, max_iter=60)
        except (NumericalError, OverflowError):
            failed += 1
            continue
        if res <= tol and np.all(np.isfinite(xi)):
            raw.append((xi, res))
    # deterministic dedup: lexicographic order, radius 100 tol
    raw.sort(key=lambda p: tuple(p[0]))
    radius = 100 * tol * (1 + max((np.max(np.abs(p[0])) for p in raw), default=0.0))
    sols: list[tuple[np.ndarray, float]] = []
    for xi, res in raw:
        if all(np.max(np.abs(xi - s[0])) > radius for s in sols):
            sols.append((xi, res))

    swap_ok = True
    for xi, _ in list(sols):
        swapped = np.concatenate([xi[n:], xi[:n]])
        if not any(np.max(np.abs(swapped - s[0])) <= radius for s in sols):
            swap_ok = False
            try:
                xs_, rs_, _ = newton_solve(ext.f, swapped, tol=tol)
                sols.append((xs_, rs_))
                notes.append("equilibrium added by swap symmetry")
            except NumericalError:
                pass

    eqs = []
    for xi, res in sols:
        x, z = xi[:n] + 0.0, xi[n:] + 0.0
        eqs.append({"x": x.tolist(), "z": z.tolist(), "residual": res,
                    "diagonal": bool(np.max(np.abs(x - z)) <= max(radius, 1e-7))})
    eqs.sort(key=lambda e: (not e["diagonal"], e["x"]))

    unique = len(eqs) == 1
    bounded = None
    if unique:
        if boundedness is None:
            boundedness = check_boundedness(model)
        bounded = boundedness.bounded
        verdict = VERDICT_CONVERGENT if bounded else VERDICT_UNVERIFIED
    elif boundedness is not None:
        bounded = boundedness.bounded
        verdict = VERDICT_MULTIPLE if eqs else VERDICT_NONE
    else:
        verdict = VERDICT_MULTIPLE if eqs else VERDICT_NONE
    return EquilibriumReport(eqs, unique, verdict, bounded, len(seeds), failed, swap_ok, notes)
