"""Timing comparison of the compiled kernels against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 7]

Each kernel is timed on fitting-sized inputs with both implementations;
the table reports the best wall time per call and the speedup. The two
implementations are also cross-checked on every input so a benchmark run
doubles as an equivalence smoke test.
"""

import argparse
import time

import numpy as np

from wavedeform._kernels import _fallback

try:
    from wavedeform._kernels import _core
except ImportError:
    _core = None


def best_time(func, repeats):
    """Best-of-N wall time in seconds for one call of ``func``."""
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def make_cases(rng):
    """(name, args, calls) per kernel, sized like one likelihood sweep."""
    x = rng.uniform(0.0, 1.0, 1024)
    coords = rng.uniform(0.0, 1.0, (200, 2))
    dists = _fallback.pairwise_distances(coords)

    k = 16
    n_panels = 64
    w_ref = np.polynomial.legendre.leggauss(k)[1]
    omega = rng.normal(0.0, 0.5, n_panels * k)
    panel_half = rng.uniform(0.002, 0.01, n_panels)
    panel_idx = np.sort(rng.integers(0, n_panels + 1, 200))

    n, nb, rhs_k = 60, 32, 48
    a = rng.standard_normal((nb, n, n))
    spd = a @ np.swapaxes(a, 1, 2) + n * np.eye(n)
    l_batch = np.linalg.cholesky(spd)
    rhs = rng.standard_normal((n, rhs_k))

    return [
        ("sinc", (x,), 200),
        ("mexican_hat", (x,), 200),
        ("basis_matrix mh J=4", (0, 4, False, x), 50),
        ("basis_matrix sh J=4", (1, 4, True, x), 50),
        ("monotone_reduce", (omega, w_ref, panel_half, panel_idx, 0.0, 1.0), 200),
        ("pairwise_distances", (coords,), 100),
        ("exp_cov_from_dists", (dists, 1.0, 0.25, 0.05), 100),
        ("tri_solve_sq_norms", (l_batch, rhs), 50),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repetitions per kernel (best is kept)")
    args = parser.parse_args(argv)

    if _core is None:
        print("compiled extension not importable; nothing to compare")
        return 1

    rng = np.random.default_rng(42)
    cases = make_cases(rng)

    header = f"{'kernel':<22s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, call_args, calls in cases:
        ref = _fallback.__dict__[name.split()[0]](*call_args)
        got = _core.__dict__[name.split()[0]](*call_args)
        np.testing.assert_allclose(got, ref, rtol=5e-13, atol=1e-15)

        t_py = best_time(
            lambda: [_fallback.__dict__[name.split()[0]](*call_args)
                     for _ in range(calls)], args.repeats) / calls
        t_c = best_time(
            lambda: [_core.__dict__[name.split()[0]](*call_args)
                     for _ in range(calls)], args.repeats) / calls
        print(f"{name:<22s} {t_py * 1e6:>8.1f}us {t_c * 1e6:>8.1f}us "
              f"{t_py / t_c:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
