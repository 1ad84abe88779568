"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

The fused compiled kernels read the data matrix once per gradient; the
fallback issues two BLAS matvecs plus intermediate temporaries.  Both are
timed on the gradient evaluations and the operator apply across problem
sizes, and the outputs are cross-checked.
"""

import argparse
import time

import numpy as np

import sil._kernels_py as pure
from sil import kernels
from sil.activations import hard_trunc, quadratic, smooth_trunc

try:
    from sil import _kernels as compiled
except ImportError:
    compiled = None

SIZES = [(64, 640), (256, 2560), (1024, 10240)]
SPECS = {"quadratic": quadratic(), "hard_trunc": hard_trunc(8.0), "smooth_trunc": smooth_trunc(8.0)}


def _time(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=10)
    args = ap.parse_args()

    if compiled is None:
        print("compiled extension unavailable; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18} {'activation':<13} {'d':>5} {'n':>6} "
          f"{'pure (ms)':>10} {'cython (ms)':>12} {'speedup':>8}")
    for d, n in SIZES:
        X = rng.standard_normal((n, d))
        theta = rng.standard_normal(d)
        theta /= np.linalg.norm(theta)
        w = rng.standard_normal(n)
        for name, spec in SPECS.items():
            y = spec.sigma(X @ (theta / np.linalg.norm(theta)))
            pack = kernels._pack(spec)
            for kname, fn_args in (
                ("corr_gradient", (X, y, theta) + pack),
                ("squared_gradient", (X, y, theta) + pack),
            ):
                tp = _time(lambda: getattr(pure, kname)(*fn_args), args.repeats)
                row = f"{kname:<18} {name:<13} {d:>5} {n:>6} {tp * 1e3:>10.3f}"
                if compiled is not None:
                    tc = _time(lambda: getattr(compiled, kname)(*fn_args), args.repeats)
                    gp, lp = getattr(pure, kname)(*fn_args)
                    gc, lc = getattr(compiled, kname)(*fn_args)
                    assert np.allclose(gp, gc, rtol=1e-11, atol=1e-12)
                    assert abs(lp - lc) <= 1e-11 * max(1.0, abs(lp))
                    row += f" {tc * 1e3:>12.3f} {tp / tc:>7.2f}x"
                print(row)
        tp = _time(lambda: pure.weighted_apply(X, w, theta), args.repeats)
        row = f"{'weighted_apply':<18} {'-':<13} {d:>5} {n:>6} {tp * 1e3:>10.3f}"
        if compiled is not None:
            tc = _time(lambda: compiled.weighted_apply(X, w, theta), args.repeats)
            assert np.allclose(pure.weighted_apply(X, w, theta),
                               compiled.weighted_apply(X, w, theta), rtol=1e-11)
            row += f" {tc * 1e3:>12.3f} {tp / tc:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
