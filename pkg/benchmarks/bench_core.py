"""Compare the compiled core against the numpy fallback on the hot loops.

    python3 benchmarks/bench_core.py [--repeat 5]

Prints best-of-N wall time per call for the Hamilton right-hand side, the
Hamiltonian and one Euler-Maruyama block, plus the speedup.
"""

import argparse
import math
import sys
import timeit

import numpy as np

from landmark_dyn import _backend, _pycore
from landmark_dyn.kernels import make_kernel
from landmark_dyn.stochastic import sde_coeffs


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    core = _backend.compiled_module()
    if core is None:
        print("compiled core not available; build it with `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    rows = []
    for name in ("laplacian", "gaussian", "log_modified"):
        k = make_kernel(name)
        for n, d in ((5, 2), (20, 3)):
            x = np.ascontiguousarray(rng.normal(size=(n, d)) * 2)
            p = np.ascontiguousarray(rng.normal(size=(n, d)))
            t_py = _best(lambda: _pycore.hamilton_rhs(x, p, k.gap, k.deriv, k.k0), args.repeat, 200)
            t_c = _best(lambda: core.hamilton_rhs(x, p, k.core_id, k.core_params), args.repeat, 200)
            rows.append((f"rhs {name} n={n} d={d}", t_py, t_c))
            t_py = _best(lambda: _pycore.hamiltonian(x, p, k.gap, k.k0), args.repeat, 200)
            t_c = _best(lambda: core.hamiltonian(x, p, k.core_id, k.core_params), args.repeat, 200)
            rows.append((f"H   {name} n={n} d={d}", t_py, t_c))

    m, steps, dt = 1024, 500, 1e-4
    thr = np.array([1e-4])
    z = np.random.default_rng(1).standard_normal((m, steps))
    for name in ("gaussian", "log_modified"):
        k = make_kernel(name)
        co = sde_coeffs(k, 2)

        def run_py():
            r = np.full(m, 0.1)
            hit = np.full((m, 1), -1, dtype=np.int64)
            _pycore.em_advance(co.sigma, co.drift, r, z, math.sqrt(dt), dt, thr, hit, 0)

        def run_c():
            r = np.full(m, 0.1)
            hit = np.full((m, 1), -1, dtype=np.int64)
            core.em_advance(k.core_id, k.core_params, 2, r, z, math.sqrt(dt), dt, thr, hit, 0)

        rows.append((f"EM  {name} {m} paths x {steps} steps", _best(run_py, args.repeat, 1),
                     _best(run_c, args.repeat, 1)))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>11}  {'cython':>11}  speedup")
    for label, t_py, t_c in rows:
        print(f"{label:<{width}}  {t_py * 1e6:9.1f}us  {t_c * 1e6:9.1f}us  {t_py / t_c:6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
