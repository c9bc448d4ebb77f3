#!/usr/bin/env python3
"""Benchmark the compiled filtering kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--batch 5000] [--n 8] [--N 40]
"""

import argparse
import time

import numpy as np

from ickalman import kernels, kernels_py
from ickalman.sampler import SamplerConfig, example_rng, sample_example


def build_batch(B, n, N, m, seed=0):
    cfg = SamplerConfig(n=n, m=m, strategy=2, sigma_q2=0.025, sigma_r2=0.025,
                        context_length=N, seed=seed)
    batch = [sample_example(cfg, 0, example_rng(seed, i)) for i in range(B)]
    F = np.stack([p.F for p, _ in batch])
    Q = np.stack([p.Q for p, _ in batch])
    H = np.stack([p.H_seq for p, _ in batch])
    r = np.stack([p.r_diag for p, _ in batch])
    y = np.stack([t.y_seq for _, t in batch])
    x0 = np.zeros((B, n))
    P0 = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    return F, Q, H, r, y, x0, P0


def timed(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=5000)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--N", type=int, default=40)
    ap.add_argument("--m", type=int, default=2)
    args = ap.parse_args()

    if not kernels.HAVE_COMPILED:
        print("compiled kernels not available; benchmarking fallback only")

    B, n, N, m = args.batch, args.n, args.N, args.m
    print(f"batch={B} n={n} N={N}")

    F, Q, H, r, y, x0, P0 = build_batch(B, n, N, 1)
    t_py, out_py = timed(kernels_py.scalar_kf_forward,
                         F, Q, H[:, :, 0, :], r[:, 0], y[:, :, 0], x0, P0)
    row = f"scalar forward   pure-python {t_py * 1e3:9.1f} ms"
    if kernels.HAVE_COMPILED:
        from ickalman import _kernels
        t_c, out_c = timed(_kernels.scalar_kf_forward,
                           F, Q, H[:, :, 0, :], r[:, 0], y[:, :, 0], x0, P0)
        err = np.max(np.abs(out_py[0] - out_c[0]))
        row += f"   compiled {t_c * 1e3:9.1f} ms   speedup {t_py / t_c:6.1f}x   max |diff| {err:.2e}"
    print(row)

    F, Q, H, r, y, x0, P0 = build_batch(B, n, N, m)
    t_py, out_py = timed(kernels_py.seq_kf_forward, F, Q, H, r, y, x0, P0)
    row = f"sequential (m={m}) pure-python {t_py * 1e3:9.1f} ms"
    if kernels.HAVE_COMPILED:
        from ickalman import _kernels
        t_c, out_c = timed(_kernels.seq_kf_forward, F, Q, H, r, y, x0, P0)
        err = np.max(np.abs(out_py[0] - out_c[0]))
        row += f"   compiled {t_c * 1e3:9.1f} ms   speedup {t_py / t_c:6.1f}x   max |diff| {err:.2e}"
    print(row)


if __name__ == "__main__":
    main()
