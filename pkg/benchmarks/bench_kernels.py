"""Timing comparison of the compiled and pure-numpy paths of the hot
kernels (stable-increment transform, Euler stepping, heavy-tail KDE).

Run directly: python benchmarks/bench_kernels.py
The compiled path is what ships by default; set STABLEHEAT_NUMBA=0 to
force the fallback in a real run.
"""

import time

import numpy as np

from stableheat import _kernels


def timeit(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_cms(n=2_000_000):
    rng = np.random.default_rng(0)
    u = rng.uniform(-np.pi / 2, np.pi / 2, n)
    w = rng.standard_exponential(n)
    rows = [("cms numpy", timeit(_kernels.cms_symmetric_np, u, w, 1.5))]
    if _kernels.USE_NUMBA:
        out = np.empty_like(u)
        _kernels._cms_symmetric_nb(u[:10], w[:10], 1.5, out[:10])  # warm up
        rows.append(("cms numba",
                     timeit(_kernels._cms_symmetric_nb, u, w, 1.5, out)))
    return rows


def bench_euler(steps=64, n_paths=50_000):
    rng = np.random.default_rng(1)
    dz = rng.standard_normal((steps, n_paths))
    vals = rng.standard_normal((8, 512))
    args = (0.0, dz, vals, 64.0, 0.0, 0.01, 0.0, 0.1)
    rows = [("euler numpy", timeit(_kernels.euler_paths_np, *args))]
    if _kernels.USE_NUMBA:
        _kernels._euler_paths_nb(0.0, dz[:, :16], vals, 64.0, 0.0, 0.01,
                                 0.0, 0.1)  # warm up
        rows.append(("euler numba",
                     timeit(_kernels._euler_paths_nb, *args)))
    return rows


def bench_kde(n=200_000, m=512):
    rng = np.random.default_rng(2)
    samples = rng.standard_normal(n)
    grid = np.linspace(-5, 5, m)
    args = (samples, grid, 0.01, 1.5, 0.75)
    rows = [("kde numpy", timeit(_kernels.kde_pbar_np, *args))]
    if _kernels.USE_NUMBA:
        _kernels._kde_pbar_nb(samples[:64], grid, 0.01, 1.5, 0.75)  # warm up
        rows.append(("kde numba", timeit(_kernels._kde_pbar_nb, *args)))
    return rows


def main():
    print(f"numba enabled: {_kernels.USE_NUMBA}")
    for rows in (bench_cms(), bench_euler(), bench_kde()):
        base = rows[0][1]
        for name, t in rows:
            speedup = f"  ({base / t:.1f}x)" if t != base else ""
            print(f"{name:14s} {t * 1e3:9.1f} ms{speedup}")


if __name__ == "__main__":
    main()
