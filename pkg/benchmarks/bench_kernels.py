"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 32 48 64] [--repeat 5]

Each kernel is compiled once before timing. The direct convolution is
only timed on small grids (it is O(N^2)).
"""
import argparse
import time

import numpy as np

from spwells import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    h = 1.0 / (n - 1)
    u = rng.normal(size=(n, n, n))
    x = np.arange(n) - (n - 1) / 2
    r = np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)
    mask = r < 0.4 * n
    yield "laplacian", lambda impl: impl.laplacian(u, h)
    yield "neumann_laplacian", lambda impl: impl.neumann_laplacian(u, mask, h)
    yield "grad_density", lambda impl: impl.grad_density(u, h)
    yield "neumann_grad_density", lambda impl: impl.neumann_grad_density(u, mask, h)
    if n <= 16:
        table = 1.0 / (1.0 + r[: n, : n, : n] ** 2)
        yield "direct_convolve", lambda impl: impl.direct_convolve(u * u, table)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 48, 64])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22} {'n':>4} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}  max|diff|")
    for n in args.sizes:
        for name, call in cases(n, rng):
            ref = call(_kernels.numpy_impl)
            got = call(_kernels.numba_impl)  # compile outside the timed region
            t_np = best_of(lambda: call(_kernels.numpy_impl), args.repeat)
            t_nb = best_of(lambda: call(_kernels.numba_impl), args.repeat)
            diff = float(np.max(np.abs(ref - got)))
            print(f"{name:<22} {n:>4} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}  {diff:.1e}")


if __name__ == "__main__":
    main()
