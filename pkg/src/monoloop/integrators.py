"""ODE/DDE integration, steady states and Newton polishing.

The stepping loops run in the kernel backend (compiled when available);
this module handles input schedules, status mapping and bookkeeping.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from ._backend import ST_DIVERGED, ST_DOMAIN, ST_MAXSTEPS, ST_UNDERFLOW
from .errors import (
    Diverged,
    DimensionMismatch,
    EvalDomainError,
    NoConvergence,
    SingularJacobian,
    StepUnderflow,
)

CLOSED_LOOP = "closed_loop"

_METHODS = ("rk4_fixed", "rkf45_adaptive")


@dataclass(frozen=True)
class IntegratorOpts:
    method: str = "rkf45_adaptive"
    step: float = 0.01
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_steps: int = 2_000_000
    divergence_norm_bound: float = 1e9

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.step > 0):
            raise ValueError("tolerances and step must be positive")
        if not self.divergence_norm_bound > 0:
            raise ValueError("divergence bound must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    status: str  # converged | reached_t_end | diverged | failed
    stats: dict = field(default_factory=dict)
    state_names: tuple = ()

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def metadata(self) -> dict:
        return {"status": self.status, "stats": self.stats,
                "n_samples": int(len(self.times)), "state_names": list(self.state_names)}

    def to_csv(self, path) -> None:
        names = list(self.state_names) or [f"x{i + 1}" for i in range(self.states.shape[1])]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            for t, x in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])

    def write(self, csv_path, extra: dict | None = None) -> None:
        """CSV plus a ``.json`` metadata sidecar next to it."""
        self.to_csv(csv_path)
        meta = self.metadata()
        if extra:
            meta.update(extra)
        with open(str(csv_path).rsplit(".", 1)[0] + ".json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)


def _raise_status(model, prog, status, pc, where=""):
    if status == ST_DOMAIN:
        off = prog.srcmap[pc] if 0 <= pc < len(prog.srcmap) else -1
        raise EvalDomainError(f"domain error in {model.name}{where}", None if off < 0 else off)
    if status == ST_UNDERFLOW:
        raise StepUnderflow(f"adaptive step underflow in {model.name}{where}")


def _segment(model, x0, u, t0, t1, opts: IntegratorOpts):
    k = _backend.kernels
    prog = model.f_program
    env = model.env(u)
    bound = opts.divergence_norm_bound
    if opts.method == "rk4_fixed":
        res = k.rk4(prog.code, prog.offsets, prog.consts, env, model.n, x0, t0, t1, opts.step, bound)
    else:
        hmin = 1e-14 * (t1 - t0)
        res = k.rkf45(prog.code, prog.offsets, prog.consts, env, model.n, x0, t0, t1,
                      opts.step, opts.rel_tol, opts.abs_tol, opts.max_steps, bound, hmin)
    ts, xs, status, pc, nacc, nrej, nfev = res
    _raise_status(model, prog, status, pc, f" at t~{ts[-1]:.6g}")
    return ts, xs, status, {"accepted": nacc, "rejected": nrej, "fevals": nfev}


def _schedule(model, signal, t0, t1):
    """Normalize an input signal into ``[(start, stop, u), ...]``."""
    if model.m == 0:
        return [(t0, t1, None)]
    if signal is None:
        raise DimensionMismatch(f"model {model.name} needs an input signal")
    arr = None
    try:
        arr = np.asarray(signal, dtype=float)
    except (TypeError, ValueError):
        pass
    if arr is not None and arr.ndim <= 1:
        arr = np.atleast_1d(arr)
        if arr.shape != (model.m,):
            raise DimensionMismatch(f"input of shape {arr.shape}, model has m={model.m}")
        return [(t0, t1, arr)]
    pieces = sorted(((float(s), np.atleast_1d(np.asarray(u, dtype=float))) for s, u in signal),
                    key=lambda p: p[0])
    out = []
    for i, (s, u) in enumerate(pieces):
        if u.shape != (model.m,):
            raise DimensionMismatch(f"input of shape {u.shape}, model has m={model.m}")
        stop = pieces[i + 1][0] if i + 1 < len(pieces) else math.inf
        a, b = max(s, t0), min(stop, t1)
        if i == 0 and s > t0:
            raise ValueError("piecewise schedule must start at or before t0")
        if b > a:
            out.append((a, b, u))
    return out


def integrate(model, x0, input=None, t_span=(0.0, 1.0), opts: IntegratorOpts | None = None
              ) -> Trajectory:
    """Integrate ``x' = f(x, u)`` over ``t_span``.

    ``input`` is a constant vector, a piecewise-constant schedule
    ``[(t_start, u), ...]``, or :data:`CLOSED_LOOP` for ``u = h(x)``.
    """
    opts = opts or IntegratorOpts()
    if isinstance(input, str) and input == CLOSED_LOOP:
        from .extended import build_closed_loop
        model = build_closed_loop(model)
        input = None
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.n,):
        raise DimensionMismatch(f"x0 of shape {x0.shape}, model has n={model.n}")
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    ts_all, xs_all = [np.array([t0])], [x0[None, :]]
    stats = {"accepted": 0, "rejected": 0, "fevals": 0, "method": opts.method}
    status = "reached_t_end"
    x = x0
    for a, b, u in _schedule(model, input, t0, t1):
        ts, xs, st, s = _segment(model, x, u, a, b, opts)
        for key in ("accepted", "rejected", "fevals"):
            stats[key] += s[key]
        ts_all.append(ts[1:])
        xs_all.append(xs[1:])
        x = xs[-1]
        if st == ST_DIVERGED:
            status = "diverged"
            break
        if st == ST_MAXSTEPS:
            status = "failed"
            break
    return Trajectory(np.concatenate(ts_all), np.vstack(xs_all), status, stats, model.states)


def dde_step(r: float, requested_step: float) -> float:
    """Largest step not above ``requested_step`` that divides ``r`` exactly."""
    return r / math.ceil(r / requested_step - 1e-12)


def integrate_dde(model, r: float, x0, t_span=(0.0, 1.0), opts: IntegratorOpts | None = None
                  ) -> Trajectory:
    """Method of steps for ``x'(t) = f(x(t), h(x(t - r)))`` with constant history ``x0``.

    Fixed-step RK4 whatever ``opts.method`` says; the step is shrunk so that
    it divides ``r``.
    """
    if not r > 0:
        raise ValueError("delay must be positive")
    opts = opts or IntegratorOpts(method="rk4_fixed")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.n,):
        raise DimensionMismatch(f"x0 of shape {x0.shape}, model has n={model.n}")
    t0, t1 = map(float, t_span)
    h = dde_step(r, opts.step)
    prog = model.program
    ts, xs, status, pc, nacc, _, nfev = _backend.kernels.dde_rk4(
        prog.code, prog.offsets, prog.consts, model.env(), model.n, model.m, x0, float(r),
        t0, t1, h, opts.divergence_norm_bound)
    _raise_status(model, prog, status, pc, f" (delay system) at t~{ts[-1]:.6g}")
    stats = {"accepted": nacc, "rejected": 0, "fevals": nfev, "method": "dde_rk4",
             "step": h, "delay": float(r)}
    st = "diverged" if status == ST_DIVERGED else "reached_t_end"
    return Trajectory(ts, xs, st, stats, model.states)


# --- Newton machinery -------------------------------------------------------------

def fd_jacobian(F, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(F(xp)) - np.asarray(F(xm))) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def newton_solve(F, x0, tol: float = 1e-12, max_iter: int = 50, damped: bool = True):
    """Damped Newton for ``F(x) = 0`` with finite-difference Jacobians.

    Returns ``(x, residual_inf, iterations)``. Raises SingularJacobian when
    the linear system cannot be solved and NoConvergence when the residual
    stops decreasing above ``tol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = np.asarray(F(x), dtype=float)
    res = float(np.max(np.abs(fx))) if fx.size else 0.0
    for it in range(max_iter):
        if res <= tol:
            return x, res, it
        J = fd_jacobian(F, x)
        try:
            if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError
            dx = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError:
            raise SingularJacobian(f"singular Jacobian at {x.tolist()}") from None
        lam = 1.0
        for _ in range(30 if damped else 1):
            xn = x + lam * dx
            try:
                fn = np.asarray(F(xn), dtype=float)
                rn = float(np.max(np.abs(fn)))
            except EvalDomainError:
                rn = math.inf
            if rn < res or not damped:
                break
            lam *= 0.5
        else:
            break
        if not math.isfinite(rn):
            break
        if rn >= res and res <= 10 * tol:
            break
        x, fx, res = xn, fn, rn
    if res <= tol:
        return x, res, max_iter
    raise NoConvergence(f"Newton stalled at residual {res:.3g}", partial=x)


# --- steady states ------------------------------------------------------------------

@dataclass
class SteadyStateResult:
    state: np.ndarray
    residual: float
    method: str  # settled | newton_polished
    converged: bool
    settle_time: float = math.nan
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state"] = self.state.tolist()
        return d


def find_steady_state(model, u_const, x0, opts: IntegratorOpts | None = None, tol: float = 1e-6,
                      still_tol: float = 1e-8, t_max: float = 1e4, window_frac: float = 0.05
                      ) -> SteadyStateResult:
    """Settle ``x' = f(x, u)`` under constant ``u`` then Newton-polish ``f(x, u) = 0``.

    Settling stops once ``||f||_inf < tol`` and the state moved less than
    ``still_tol`` over the trailing ``window_frac`` of elapsed time. Both
    tolerances are scaled by ``max(1, ||x||_inf)``.
    """
    opts = opts or IntegratorOpts(rel_tol=1e-10, abs_tol=1e-12, step=0.05)
    u = None if model.m == 0 else np.atleast_1d(np.asarray(u_const, dtype=float))
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.shape != (model.n,):
        raise DimensionMismatch(f"x0 of shape {x.shape}, model has n={model.n}")
    hist_t, hist_x = [0.0], [x]
    t = 0.0
    chunk = 1.0
    settled = False
    while t < t_max:
        t_next = min(t + chunk, t_max)
        tr = integrate(model, x, u, (t, t_next), opts)
        if tr.status == "diverged":
            raise Diverged(f"{model.name} diverged under constant input {u} by t={tr.times[-1]:.4g}")
        if tr.status == "failed":
            break
        t, x = float(tr.times[-1]), tr.final
        hist_t.extend(tr.times[1:].tolist())
        hist_x.extend(tr.states[1:])
        res = float(np.max(np.abs(model.f(x, u))))
        scale = max(1.0, float(np.max(np.abs(x))))
        if res < tol * scale:
            tw = t - window_frac * t
            past = np.array([np.interp(tw, hist_t, col) for col in np.asarray(hist_x).T])
            if float(np.max(np.abs(x - past))) < still_tol * scale:
                settled = True
                break
        chunk = max(1.0, 0.25 * t)
    res = float(np.max(np.abs(model.f(x, u))))
    if not settled:
        return SteadyStateResult(x, res, "settled", False, t,
                                 note=f"not settled by t={t:.4g} (residual {res:.3g})")
    note = ""
    method = "settled"
    try:
        xp, rp, _ = newton_solve(lambda z: model.f(z, u), x, tol=1e-13, max_iter=20)
        if rp <= res:
            x, res, method = xp, rp, "newton_polished"
    except SingularJacobian as e:
        note = f"polish skipped: {e}"
    except NoConvergence as e:
        if e.partial is not None:
            rp = float(np.max(np.abs(model.f(e.partial, u))))
            if rp < res:
                x, res, method = e.partial, rp, "newton_polished"
    scale = max(1.0, float(np.max(np.abs(x))))
    return SteadyStateResult(x, res, method, res <= tol * scale, t, note)
