"""Compare the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, and the max
absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from lpfield import _purepy

try:
    from lpfield import _speedups
except ImportError:  # extension not built
    _speedups = None


def _cases(rng):
    # peetre_sup: 1D, N = 2^11, rapidly decaying weight
    N = 2**11
    u = np.abs(rng.standard_normal(N))
    y = np.minimum(np.arange(N), N - np.arange(N)) / N
    w = (1 + 64 * y) ** -2.0
    yield "peetre_sup 1D N=2048", "peetre_sup", (u, w)

    n = 64
    u2 = np.abs(rng.standard_normal((n, n)))
    y1 = np.minimum(np.arange(n), n - np.arange(n)) / n
    w2 = (1 + 16 * np.hypot(y1[:, None], y1[None, :])) ** -3.0
    yield "peetre_sup 2D 64x64", "peetre_sup", (u2, w2)

    yield "box_max 1D N=2048", "box_max", (np.abs(rng.standard_normal(N)),)
    yield "box_max 2D 64x64", "box_max", (np.abs(rng.standard_normal((n, n))),)

    M = 256
    C = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    R = rng.integers(0, M, size=(M, M))
    G = rng.random((M, M))
    yield "gather_diag M=256", "gather_diag", (C, R, G)


def _best(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<24}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for label, name, fargs in _cases(rng):
        t_py, ref = _best(getattr(_purepy, name), fargs, args.repeat)
        if _speedups is None:
            print(f"{label:<24}{1e3 * t_py:>14.3f}{'n/a':>14}{'':>10}{'':>12}")
            continue
        t_cy, out = _best(getattr(_speedups, name), fargs, args.repeat)
        diff = float(np.abs(np.asarray(out) - np.asarray(ref)).max())
        print(f"{label:<24}{1e3 * t_py:>14.3f}{1e3 * t_cy:>14.3f}{t_py / t_cy:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
