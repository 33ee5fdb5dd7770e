"""Compiled vs numpy kernels: wall time and agreement.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from chaotic_planck import _kernels_py
from chaotic_planck.hilbert import random_density, random_hermitian

try:
    from chaotic_planck import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(rng):
    d, s, n = 8, 256, 200
    coeffs = rng.normal(size=d) + 1j * rng.normal(size=d)
    coeffs /= np.linalg.norm(coeffs)
    yield ("fixed_spectrum_moments (S=256, n=200, d=8)", "fixed_spectrum_moments",
           (coeffs, np.sort(rng.normal(size=d)), np.ascontiguousarray(rng.uniform(0, 20, (s, n)))))
    st = rng.normal(size=(64, 100, 4)) + 1j * rng.normal(size=(64, 100, 4))
    yield ("state_moments (S=64, n=100, d=4)", "state_moments", (np.ascontiguousarray(st),))
    for d in (2, 8):
        h = np.ascontiguousarray(random_hermitian(d, rng).elements)
        rho = np.ascontiguousarray(random_density(d, rng).elements)
        yield (f"rk4_double_commutator (d={d}, 4000 steps)", "rk4_double_commutator",
               (rho, h, 0.1, 1.0, 0.002, 4000, 10))


def max_diff(a, b):
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled kernels not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':46s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>9s}")
    for label, name, fargs in cases(rng):
        py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py(*fargs), number=1, repeat=args.repeat)) * 1e3
        if _kernels_c is None:
            print(f"{label:46s} {t_py:12.2f}")
            continue
        c = getattr(_kernels_c, name)
        t_c = min(timeit.repeat(lambda: c(*fargs), number=1, repeat=args.repeat)) * 1e3
        diff = max_diff(py(*fargs), c(*fargs))
        print(f"{label:46s} {t_py:12.2f} {t_c:12.2f} {t_py / t_c:7.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
