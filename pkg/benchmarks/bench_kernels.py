"""Time the compiled kernels against the pure-Python fallback.

Run ``python benchmarks/bench_kernels.py``. Each case is run on every
importable backend; results are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from monoloop._backend import available
from monoloop.model import goodwin_model


def cases(model):
    n, m = model.n, model.m
    f, fh = model.f_program, model.program
    env, env_u = model.env(), model.env([2.0] * m)
    x0 = np.zeros(n)
    rng = np.random.default_rng(0)
    mats = [rng.standard_normal((20, 20)) for _ in range(20)]
    return {
        "rk4 (goodwin, 10k steps)":
            lambda k: k.rk4(f.code, f.offsets, f.consts, env_u, n, x0, 0.0, 100.0, 0.01, 1e9)[1][-1],
        "rkf45 (goodwin, t=200)":
            lambda k: k.rkf45(f.code, f.offsets, f.consts, env_u, n, x0, 0.0, 200.0, 0.01, 1e-10, 1e-12,
                              2_000_000, 1e9, 1e-14)[1][-1],
        "dde_rk4 (goodwin, r=20, t=400)":
            lambda k: k.dde_rk4(fh.code, fh.offsets, fh.consts, env, n, m, np.full(n, 2.0), 20.0, 0.0, 400.0,
                                0.01, 1e9)[1][-1],
        "hqr (20 random 20x20)":
            lambda k: np.concatenate([np.sort_complex(w + 1j * v) for w, v, *_ in
                                      (k.hqr_eigen(M, 600) for M in mats)]),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available()
    model = goodwin_model(2.0, 4.0)
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':34s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in cases(model).items():
        results = {b: fn(k) for b, k in backends.items()}
        ref = results["python"]
        for b, r in results.items():
            if not np.allclose(r, ref, rtol=1e-9, atol=1e-12):
                raise SystemExit(f"{name}: backend {b} disagrees with python")
        t = {b: best_of(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}
        speed = f"{t['python'] / t['cython']:10.1f}x" if "cython" in t else ""
        print(f"{name:34s}" + "".join(f"{t[b]:11.4f}s" for b in backends) + speed)


if __name__ == "__main__":
    main()
