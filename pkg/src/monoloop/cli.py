"""``monoloop`` command line.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .characteristic import CharacteristicMap, default_u_seeds, find_k2_solutions, iterate_char
from .ddeexperiments import delay_settles, pseudo_oscillation_experiment
from .errors import (
    MonoloopError,
    NoConvergence,
    NumericalError,
    PairNotPeriodTwo,
    ParseError,
    ValidationError,
)
from .extended import check_boundedness, find_extended_equilibria
from .integrators import CLOSED_LOOP, IntegratorOpts, integrate
from .linear import small_gain_report
from .model import load_model_file
from .order import check_monotone

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_jsonable, ensure_ascii=False)
        fh.write("\n")


def parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


def parse_vectors(text: str, dim: int) -> list[np.ndarray]:
    """``"0,1,5"`` gives three scalars when ``dim == 1``; otherwise vectors are ``;``-separated."""
    if dim == 1 and ";" not in text:
        return [np.array([v]) for v in parse_floats(text)]
    out = [np.array(parse_floats(chunk)) for chunk in text.split(";") if chunk.strip()]
    for v in out:
        if v.shape != (dim,):
            raise ValidationError(f"vector {v.tolist()} does not have {dim} components")
    return out


def _config(args) -> dict:
    keep = {k: v for k, v in vars(args).items() if k != "func"}
    return dict(sorted(keep.items()))


def _out(args, name) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _emit(args, name, payload) -> str:
    payload = dict(payload, config=_config(args))
    path = _out(args, name)
    dump_json(payload, path)
    return path


# --- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    model = load_model_file(args.model)
    label = "monotone-candidate"
    try:
        v = check_monotone(model, trials=args.trials or 10, horizon=args.horizon or 5.0,
                           rng_seed=args.seed)
        if not v.system_monotone:
            label = "not-monotone"
        elif model.m and v.output_class != "anti-monotone":
            label = f"monotone, output {v.output_class}"
    except NumericalError as e:
        label = f"monotonicity unchecked ({e})"
    print(f"n={model.n} m={model.m} {label}")
    print(f"order_states {model.order_states.text()}")
    if model.m:
        print(f"order_inputs {model.order_inputs.text()}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model_file(args.model)
    x0 = np.array(parse_floats(args.x0)) if args.x0 else np.zeros(model.n)
    if args.u is None or args.u == "closed":
        signal = CLOSED_LOOP
    else:
        signal = np.array(parse_floats(args.u))
    opts = IntegratorOpts(method=args.method, step=args.step,
                          rel_tol=args.tol or 1e-9)
    tr = integrate(model, x0, signal, (0.0, args.horizon or 10.0), opts)
    extra = {"config": _config(args)}
    tr.write(_out(args, "trajectory.csv"), extra)
    print(f"{tr.status} at t={float(tr.times[-1])!r}: x={tr.final.tolist()}")
    return EXIT_OK if tr.status == "reached_t_end" else EXIT_NUMERICAL


def _seeds(args, model):
    if args.u_seeds:
        return parse_vectors(args.u_seeds, model.m)
    return default_u_seeds(model, rng_seed=args.seed)


def cmd_characteristic(args) -> int:
    model = load_model_file(args.model)
    if model.m == 0:
        raise ValidationError("model has no inputs, so no characteristic")
    seeds = _seeds(args, model)
    tol = args.tol or 1e-9
    lo, hi = np.min(seeds, axis=0), np.max(seeds, axis=0)
    grid = [lo + (hi - lo) * t for t in np.linspace(0.0, 1.0, args.grid_points)]
    k = CharacteristicMap(model)
    rows, partial = [], False
    for u in grid:
        try:
            rows.append((u, k(u)))
        except NoConvergence:
            partial = True
    with open(_out(args, "k_grid.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"u{j + 1}" for j in range(model.m)] + [f"k{j + 1}" for j in range(model.m)])
        for u, ku in rows:
            w.writerow([repr(float(v)) for v in np.concatenate([u, ku])])
    runs, failed = [], False
    for i, s in enumerate(seeds):
        try:
            res = iterate_char(model, s, tol=tol)
        except NoConvergence as e:
            failed = True
            runs.append({"seed": s.tolist(), "error": str(e),
                         "partial_orbit": [np.asarray(u).tolist() for u in (e.partial or [])]})
            continue
        res.orbit_csv(_out(args, f"orbit_{i}.csv"))
        runs.append(dict(res.to_dict(), seed=s.tolist()))
        print(f"seed {s.tolist()}: {res.classification}"
              + (f" {res.fixed_point.tolist()}" if res.fixed_point is not None else "")
              + (f" {[p.tolist() for p in res.period_two]}" if res.period_two else ""))
    _emit(args, "iteration.json", {"runs": runs, "grid_partial": partial, "failed": failed})
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_smallgain(args) -> int:
    model = load_model_file(args.model)
    tol = args.tol or 1e-9
    k2 = None
    if model.m:
        k2 = find_k2_solutions(model, _seeds(args, model), tol=tol)
    bnd = check_boundedness(model, trials=args.trials or 20, horizon=args.horizon or 50.0,
                            rng_seed=args.seed)
    rep = find_extended_equilibria(model, rng_seed=args.seed, k2=k2, boundedness=bnd)
    _emit(args, "smallgain.json", {
        "equilibria": rep.to_dict(),
        "k2_solutions": None if k2 is None else k2.to_dict(),
        "boundedness": bnd.to_dict(),
        "verdict": rep.verdict,
    })
    print(rep.verdict)
    return EXIT_OK


def cmd_linear(args) -> int:
    model = load_model_file(args.model)
    if model.linear is None:
        raise ValidationError("linear analysis needs a model given by 'linear A/B/C' lines")
    lin = model.linear
    rep = small_gain_report(lin.A, lin.B, lin.C, model.order_states, model.order_inputs)
    _emit(args, "linear.json", rep.to_dict())
    print(rep.verdict)
    return EXIT_OK


def cmd_dde(args) -> int:
    model = load_model_file(args.model)
    rs = parse_floats(args.r) if args.r else None
    opts = IntegratorOpts(method="rk4_fixed", step=args.step)
    if args.settle:
        x0 = np.array(parse_floats(args.x0)) if args.x0 else np.ones(model.n)
        results = []
        for r in rs or [1.0]:
            t_end = args.horizon or max(40.0 * r, 50.0)
            ok, peak = delay_settles(model, r, x0, t_end, opts=opts)
            results.append({"r": r, "t_end": t_end, "settled": ok, "peak_last_interval": peak})
            print(f"r={r!r}: {'settled' if ok else 'not settled'} (peak {peak:.3g})")
        _emit(args, "dde_settle.json", {"runs": results})
        return EXIT_OK
    if args.pair:
        u0, u1 = parse_vectors(args.pair, model.m)
    else:
        pair = None
        for s in _seeds(args, model):
            res = iterate_char(model, s, tol=args.tol or 1e-9)
            if res.classification == "period_two":
                pair = res.period_two
                break
        if pair is None:
            raise PairNotPeriodTwo("no period-two pair found from the input seeds")
        u0, u1 = pair
    for r in rs or [None]:
        rep = pseudo_oscillation_experiment(model, u0, u1, r=r, opts=opts)
        tag = f"{rep.r:g}"
        rep.trajectory.to_csv(_out(args, f"dde_r{tag}.csv"))
        _emit(args, f"dde_r{tag}.json", rep.to_dict())
        print(f"r={rep.r!r}: visits {rep.counts()} "
              f"pseudo-oscillation {'detected' if rep.detected else 'not detected'}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", "--seeds", dest="seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--r", default=None, help="comma-separated delays")
    common.add_argument("--u-seeds", default=None,
                        help="input seeds: comma-separated scalars, or ';'-separated vectors")

    p = argparse.ArgumentParser(prog="monoloop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="parse a model and summarize it")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", parents=[common], help="integrate open or closed loop")
    s.add_argument("--x0", default=None)
    s.add_argument("--u", default=None, help="constant input, or 'closed' (default)")
    s.add_argument("--method", default="rkf45_adaptive", choices=["rkf45_adaptive", "rk4_fixed"])
    s.add_argument("--step", type=float, default=0.01)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("characteristic", parents=[common], help="k(u) grid and iteration")
    s.add_argument("--grid-points", type=int, default=21)
    s.set_defaults(func=cmd_characteristic)

    s = sub.add_parser("smallgain", parents=[common], help="doubled-system equilibria and verdict")
    s.set_defaults(func=cmd_smallgain)

    s = sub.add_parser("linear", parents=[common], help="linear small-gain report")
    s.set_defaults(func=cmd_linear)

    s = sub.add_parser("dde", parents=[common], help="delayed feedback experiments")
    s.add_argument("--pair", default=None, help="period-two pair u0;u1 (scalars: u0,u1)")
    s.add_argument("--settle", action="store_true", help="check decay to zero for each delay")
    s.add_argument("--x0", default=None, help="constant history for --settle")
    s.add_argument("--step", type=float, default=0.01)
    s.set_defaults(func=cmd_dde)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, OSError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        try:
            _emit(args, "failure.json", {"failed": True, "error": type(e).__name__,
                                         "message": str(e)})
        except OSError:
            pass
        return EXIT_NUMERICAL
    except MonoloopError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
