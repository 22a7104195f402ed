#!/usr/bin/env python3
"""Compiled kernels against the numpy fallback.

Times each hot kernel on 1D and 2D inputs under both backends, checks
that they agree, and optionally times an end-to-end soliton solve in a
subprocess with COCOMPACT_NO_NUMBA set.  Prints a table; ``--json``
writes the raw numbers.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from cocompact import _kernels as K

CASES = {
    "energy": (lambda a: K._energy_1d(a, 0.05, 2.0, True), lambda a: K.energy_np(a, 0.05, 2.0, True),
               lambda a: K._energy_2d(a, 0.05, 1.5, False), lambda a: K.energy_np(a, 0.05, 1.5, False)),
    "energy_grad": (lambda a: K._energy_grad_1d(a, 0.05, 2.0, True), lambda a: K.energy_grad_np(a, 0.05, 2.0, True),
                    lambda a: K._energy_grad_2d(a, 0.05, 1.5, False),
                    lambda a: K.energy_grad_np(a, 0.05, 1.5, False)),
    "power_sum": (lambda a: K._power_sum(a, 4.0), lambda a: K.power_sum_np(a, 4.0),
                  lambda a: K._power_sum(a, 6.0), lambda a: K.power_sum_np(a, 6.0)),
}

SOLVE = ("from cocompact import *; import time; t = time.perf_counter(); "
         "minimize_isoperimetric(IsoperimetricProblem(EnergySpec(2.0, 1), MassSpec(4.0), 16/3)); "
         "print(time.perf_counter() - t)")


def best_of(fn, arg, runs):
    fn(arg)  # warm-up (and JIT compile)
    times = []
    for _ in range(runs):
        t = time.perf_counter()
        fn(arg)
        times.append(time.perf_counter() - t)
    return min(times)


def agree(x, y):
    return bool(np.allclose(np.asarray(x), np.asarray(y), rtol=1e-10, atol=1e-12))


def kernel_rows(n1, n2, runs, seed):
    rng = np.random.default_rng(seed)
    a1 = rng.standard_normal(n1)
    a2 = rng.standard_normal((n2, n2))
    t1 = rng.standard_normal(81)
    t2 = rng.standard_normal((9, 9))
    rows = []
    for name, (f1, g1, f2, g2) in CASES.items():
        for shape, f, g, a in ((a1.shape, f1, g1, a1), (a2.shape, f2, g2, a2)):
            rows.append((name, shape, best_of(f, a, runs), best_of(g, a, runs), agree(f(a), g(a))))
    for shape, f, g, a, t in ((a1.shape, K._correlate_1d, K.correlate_np, a1, t1),
                              (a2.shape, K._correlate_2d, K.correlate_np, a2, t2)):
        rows.append(("correlate", shape, best_of(lambda x: f(x, t), a, runs),
                     best_of(lambda x: g(x, t), a, runs), agree(f(a, t), g(a, t))))
    return rows


def solve_time(no_numba):
    env = dict(os.environ, COCOMPACT_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n1", type=int, default=100_000, help="1D array length")
    ap.add_argument("--n2", type=int, default=512, help="2D array side")
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--solve", action="store_true", help="also time an end-to-end soliton solve")
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)

    rows = kernel_rows(args.n1, args.n2, args.runs, args.seed)
    print(f"{'kernel':<12} {'shape':<12} {'numba [ms]':>11} {'numpy [ms]':>11} {'speed-up':>9}  agree")
    for name, shape, tn, tp, ok in rows:
        print(f"{name:<12} {str(shape):<12} {tn * 1e3:11.3f} {tp * 1e3:11.3f} {tp / tn:9.1f}  {ok}")
    result = {"kernels": [dict(kernel=n, shape=list(s), numba=tn, numpy=tp, agree=ok)
                          for n, s, tn, tp, ok in rows]}
    if args.solve:
        tn, tp = solve_time(False), solve_time(True)
        print(f"soliton solve: numba {tn:.2f} s, numpy {tp:.2f} s, speed-up {tp / tn:.1f}")
        result["solve"] = {"numba": tn, "numpy": tp}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=1)
    return 0 if all(r[-1] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
