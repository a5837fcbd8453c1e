#!/usr/bin/env python3
"""Benchmark the compiled tap kernels against the NumPy fallback.

Times the raw tapped-delay-line kernels (the hot loop of every channel
application inside the detector) and a full effective-channel forward apply,
for the two operating points used in the experiments.

Run from the repository root after building the extension:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from otfssim import _kernels_py, kernels
from otfssim.channel import DDChannelOperator, sample_eva_channel
from otfssim.frame import FrameConfig


def time_call(fn, *args, repeat=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels(L, n, repeat=200):
    rng = np.random.default_rng(0)
    taps = rng.standard_normal((L, n)) + 1j * rng.standard_normal((L, n))
    x = np.ascontiguousarray(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    out = np.empty_like(x)
    x2 = np.ascontiguousarray(x[:, None])
    out2 = np.empty_like(x2)

    rows = []
    if kernels.BACKEND == "compiled":
        from otfssim import _kernels

        t_c = time_call(_kernels.tap_convolve, taps, x, out, repeat=repeat)
        t_ca = time_call(_kernels.tap_convolve_adjoint, taps, x, out, repeat=repeat)
    else:
        t_c = t_ca = float("nan")
    t_p = time_call(_kernels_py.tap_convolve, taps, x2, out2, repeat=repeat)
    t_pa = time_call(_kernels_py.tap_convolve_adjoint, taps, x2, out2, repeat=repeat)
    rows.append(("forward", t_c, t_p))
    rows.append(("adjoint", t_ca, t_pa))
    return rows


def bench_operator(cfg, speed_kmh=500.0, repeat=100):
    chan = sample_eva_channel(1, speed_kmh, cfg.fc, cfg.Ts)
    op = DDChannelOperator.from_realization(chan, cfg)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
    return time_call(op.forward, x, repeat=repeat)


def main():
    print(f"active kernel backend: {kernels.BACKEND}")
    print()
    print(f"{'kernel':28s} {'compiled':>12s} {'numpy':>12s} {'speedup':>9s}")
    for L, Ts in ((5, 520.3e-9), (19, 133.33e-9)):
        cfg = FrameConfig(M=128, N=32, Ts=Ts, L=L)
        for name, t_c, t_p in bench_kernels(L, cfg.M_T):
            tag = f"tap {name} (L={L}, n={cfg.M_T})"
            speedup = t_p / t_c if t_c == t_c else float("nan")
            print(f"{tag:28s} {t_c * 1e6:10.1f}us {t_p * 1e6:10.1f}us {speedup:8.2f}x")
    print()
    for L, Ts in ((5, 520.3e-9), (19, 133.33e-9)):
        cfg = FrameConfig(M=128, N=32, Ts=Ts, L=L)
        t = bench_operator(cfg)
        print(f"effective-channel forward apply (L={L}): {t * 1e6:8.1f}us")


if __name__ == "__main__":
    main()
