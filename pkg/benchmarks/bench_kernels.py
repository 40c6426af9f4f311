"""Compare the compiled and the numpy kernel backends.

    python3 benchmarks/bench_kernels.py --features 257 --k 8 32 --block 1 100 1000

For every (K, block) pair this times ``fit_block`` (activation solve plus
statistics for one mini-batch) and ``commit`` (one dictionary update) with
both backends and prints the per-frame and per-commit costs.
"""
import argparse
import statistics
import time

import numpy as np

from isnmf import _pykernels

try:
    from isnmf import _ckernels
except ImportError:
    _ckernels = None


def problem(F, K, N, seed=0):
    rng = np.random.default_rng(seed)
    w = np.asfortranarray(rng.random((F, K)) + 0.05)
    w /= w.sum(axis=0)
    h = np.asfortranarray(rng.gamma(1.0, 1.0, (K, N)) + 0.01)
    v = np.asfortranarray(w @ h * np.exp(0.1 * rng.standard_normal((F, N))))
    return v, w, h


def time_fit(impl, v, w, h0, iters, eps, repeats):
    samples = []
    for _ in range(repeats):
        h = h0.copy(order="F")
        pa = np.zeros(w.shape, order="F")
        pb = np.zeros(w.shape, order="F")
        div = np.empty(v.shape[1])
        start = time.perf_counter()
        impl.fit_block(v, w, h, iters, eps, pa, pb, div)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def time_commit(impl, w0, repeats):
    F, K = w0.shape
    samples = []
    for _ in range(repeats):
        w = w0.copy(order="F")
        a, b = np.asfortranarray(w**2), np.ones((F, K), order="F")
        pa, pb = np.asfortranarray(w**2), np.ones((F, K), order="F")
        scales = np.empty(K)
        start = time.perf_counter()
        impl.commit(w, a, b, pa, pb, 0.7, scales)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--features", type=int, default=257)
    p.add_argument("--k", type=int, nargs="+", default=[8, 32])
    p.add_argument("--block", type=int, nargs="+", default=[1, 100, 1000])
    p.add_argument("--iters", type=int, default=1, help="inner activation iterations per frame")
    p.add_argument("--repeats", type=int, default=7)
    args = p.parse_args(argv)

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["c"] = _ckernels
    else:
        print("compiled backend not built; timing numpy only")

    print(f"F={args.features}, inner iterations={args.iters}, median of {args.repeats}")
    print(f"{'K':>4} {'block':>6} " + " ".join(f"{name + ' us/frame':>16}" for name in backends)
          + " " + " ".join(f"{name + ' us/commit':>17}" for name in backends) + f" {'speedup':>8}")
    for K in args.k:
        for N in args.block:
            v, w, h = problem(args.features, K, N)
            fit = {name: time_fit(impl, v, w, h, args.iters, 1e-12, args.repeats) / N
                   for name, impl in backends.items()}
            com = {name: time_commit(impl, w, args.repeats) for name, impl in backends.items()}
            speed = fit["python"] / fit["c"] if "c" in fit else float("nan")
            print(f"{K:>4} {N:>6} " + " ".join(f"{fit[n] * 1e6:>16.2f}" for n in backends)
                  + " " + " ".join(f"{com[n] * 1e6:>17.2f}" for n in backends) + f" {speed:>8.1f}")


if __name__ == "__main__":
    main()
