"""Time the leapfrog, acceleration and energy kernels under both backends.

    python benchmarks/bench_kernels.py [--n 8001] [--steps 2000] [--repeat 5]

The numba kernels are warmed up once before timing so compilation is not
counted.  Results agree between backends to round-off; the script checks that
too.
"""

import argparse
import timeit

import numpy as np

from sigma_collapse import kernels
from sigma_collapse.evolve import max_stable_dt
from sigma_collapse.grid import RadialGrid
from sigma_collapse.profiles import SolitonProfile


def setup(n):
    g = RadialGrid.two_zone(n, 0.001, 2.0, 40.0)
    coef = kernels.GridCoefficients(g, 4)
    phi = SolitonProfile(4).I(g.r)
    pi = 0.01 * SolitonProfile(4).J(g.r)
    return g, coef, phi, pi


def bench(backend, coef, phi, pi, dt, steps, repeat):
    def lf():
        p, q = phi.copy(), pi.copy()
        kernels.leapfrog(coef, p, q, dt, steps, backend=backend)
        return p

    out = {
        "leapfrog": min(timeit.repeat(lf, number=1, repeat=repeat)) / steps,
        "accel": min(timeit.repeat(lambda: kernels.accel(coef, phi, backend=backend),
                                   number=50, repeat=repeat)) / 50,
        "energy": min(timeit.repeat(lambda: kernels.energy(coef, phi, pi, backend=backend),
                                    number=50, repeat=repeat)) / 50,
    }
    return out, lf()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8001)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    g, coef, phi, pi = setup(args.n)
    dt = 0.5 * max_stable_dt(g, 4)
    backends = ["numpy"]
    if kernels._HAVE_NUMBA:
        # warm up the JIT
        kernels.leapfrog(coef, phi.copy(), pi.copy(), dt, 2, backend="numba")
        kernels.energy(coef, phi, pi, backend="numba")
        backends.insert(0, "numba")
    else:
        print("numba not installed; timing the numpy backend only")

    results, finals = {}, {}
    for b in backends:
        results[b], finals[b] = bench(b, coef, phi, pi, dt, args.steps, args.repeat)

    print(f"N = {args.n}, {args.steps} leapfrog steps, best of {args.repeat}")
    print(f"{'kernel':<10}" + "".join(f"{b + ' [us]':>16}" for b in backends)
          + ("    speedup" if len(backends) == 2 else ""))
    for name in ("leapfrog", "accel", "energy"):
        row = f"{name:<10}" + "".join(f"{results[b][name] * 1e6:16.2f}" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy'][name] / results['numba'][name]:11.1f}x"
        print(row)
    if len(backends) == 2:
        diff = np.max(np.abs(finals["numba"] - finals["numpy"]))
        print(f"max |phi_numba - phi_numpy| after {args.steps} steps: {diff:.2e}")


if __name__ == "__main__":
    main()
