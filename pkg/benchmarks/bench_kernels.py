"""Compiled kernels versus the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Times each hot kernel with both backends on the workloads the pipeline runs:
one 10 s trajectory, one closed-loop hold step, and the dictionary
evaluations over a 114-trajectory ensemble.
"""

import argparse
import json
import timeit

import numpy as np

from koopinv import _kernels_py, build_dictionary
from koopinv.systems import euler_coefficients, paper_forcing

try:
    from koopinv import _kernels as _compiled
except ImportError:
    _compiled = None


def workloads():
    rng = np.random.default_rng(0)
    coef = euler_coefficients((1.0, 0.5, 1.0 / 3.0))
    x0 = np.array([0.2, 0.9, -0.4])
    n = 1000
    bu = np.ascontiguousarray(paper_forcing()(np.arange(2 * n + 1) * 0.005))
    held = np.array([[0.1, -0.2, 0.05]])
    exps = build_dictionary(3, 3).exponents
    X = rng.standard_normal((114_114, 3))
    V = rng.standard_normal((114_114, 3))
    return {
        "rk4 forced, 1000 steps": lambda k: k.rk4_rigid_body(x0, coef, bu, 0.01, n, 1e9),
        "rk4 hold, 10 substeps": lambda k: k.rk4_rigid_body(x0, coef, held, 0.001, 10, 1e9),
        "monomial values, 114k x 19": lambda k: k.monomial_values(X, exps),
        "monomial gradients, 114k x 19": lambda k: k.monomial_gradients(X, exps),
        "directional, 114k x 19": lambda k: k.monomial_directional(X, V, exps),
    }


def best(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    rows = []
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in workloads().items():
        t_py = best(lambda: call(_kernels_py), args.repeat)
        t_cy = best(lambda: call(_compiled), args.repeat) if _compiled else float("nan")
        rows.append({"kernel": name, "numpy_s": t_py, "cython_s": t_cy, "speedup": t_py / t_cy})
        print(f"{name:32s} {1e3 * t_py:12.4f} {1e3 * t_cy:12.4f} {t_py / t_cy:8.1f}x")
    if _compiled is None:
        print("compiled extension not built; only the fallback was timed")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
