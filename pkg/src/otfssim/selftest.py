"""Small-size algebraic identity checks runnable from the command line.

Each check exercises one structural identity the receivers rely on, at sizes
where dense cross-checks are instant.  The checks call library functions
through their modules so a fault injected by rebinding a module attribute is
caught.
"""

import numpy as np

from . import channel, estimation, frame, pilots

_RNG_SEED = 20240915


def _random_config(scheme=frame.Scheme.FULL_GUARD, M=32, N=16, L=4):
    return frame.FrameConfig(M=M, N=N, Ts=1e-6, L=L, Mcp=L, scheme=scheme, m_p=M // 2)


def _random_channel(rng, L, Ts, doppler_scale=0.2):
    paths = []
    for tap in range(L):
        nu = doppler_scale * rng.uniform(-1.0, 1.0) / (32 * 16 * Ts)
        gain = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2 * L)
        paths.append(channel.ChannelPath(tap, nu, complex(gain)))
    return channel.ChannelRealization(paths)


def check_pipeline_equivalence():
    """Dense effective-channel matrix equals the transform pipeline, 20 draws."""
    rng = np.random.default_rng(_RNG_SEED)
    cfg = _random_config()
    worst = 0.0
    for _ in range(20):
        chan = _random_channel(rng, cfg.L, cfg.Ts)
        dense = channel.build_heff_oracle(chan, cfg)
        x = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
        via_pipeline = frame.delay_time_to_dd(
            frame.remove_cp(
                channel.apply_ltv(
                    frame.add_cp(
                        frame.dd_to_delay_time(frame.unvec(x, cfg.M, cfg.N)), cfg.Mcp
                    ),
                    chan,
                    cfg.Ts,
                ),
                cfg.Mcp,
            ),
            cfg.M,
            cfg.N,
        )
        err = np.linalg.norm(dense @ x - frame.vec(via_pipeline)) / np.linalg.norm(x)
        worst = max(worst, err)
    return worst < 1e-9, f"max relative error {worst:.3e} (tol 1e-9)"


def check_block_circulant_duality():
    """Symbols-times-response equals response-matrix-times-symbols at L=4, N=4."""
    rng = np.random.default_rng(_RNG_SEED + 1)
    L, N = 4, 4
    worst = 0.0
    for _ in range(5):
        window = rng.standard_normal((2 * L - 1, N)) + 1j * rng.standard_normal((2 * L - 1, N))
        h = rng.standard_normal(L * N) + 1j * rng.standard_normal(L * N)
        lhs = estimation.build_sbc(window).apply(h)
        # Dense response-side matrix: block circulant of L x (2L-1) Toeplitz
        # slices of h, applied to the vectorised window.
        Hp = np.zeros((L * N, (2 * L - 1) * N), dtype=complex)
        for r in range(N):
            for c in range(N):
                n = (r - c) % N
                blk = np.zeros((L, 2 * L - 1), dtype=complex)
                for i in range(L):
                    for j in range(2 * L - 1):
                        t = i - j + L - 1
                        if 0 <= t <= L - 1:
                            blk[i, j] = h[n * L + t]
                Hp[r * L : (r + 1) * L, c * (2 * L - 1) : (c + 1) * (2 * L - 1)] = blk
        rhs = Hp @ window.flatten(order="F")
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    return worst < 1e-10, f"max relative error {worst:.3e} (tol 1e-10)"


def check_pilot_only_identity():
    """A pilot-only full-guard window yields a scaled-identity symbol operator."""
    cfg = _random_config()
    lay = pilots.layout(cfg.scheme, cfg)
    window = lay.pilot_grid()[cfg.m_p - cfg.L + 1 : cfg.m_p + cfg.L, : ]
    S = estimation.build_sbc(window).dense()
    target = np.sqrt(cfg.gamma_p) * np.eye(cfg.L * cfg.N)
    ok = np.array_equal(S.shape, target.shape) and np.allclose(S, target, atol=0, rtol=0)
    return ok, "pilot window operator is exactly sqrt(power) * identity" if ok else "operator is not the scaled identity"


def check_full_guard_exactness():
    """Noiseless full-guard estimation recovers the pilot column exactly."""
    rng = np.random.default_rng(_RNG_SEED + 2)
    cfg = _random_config()
    chan = _random_channel(rng, cfg.L, cfg.Ts)
    lay = pilots.layout(cfg.scheme, cfg)
    X = lay.pilot_grid()
    rx = frame.delay_time_to_dd(
        frame.remove_cp(
            channel.apply_ltv(frame.add_cp(frame.dd_to_delay_time(X), cfg.Mcp), chan, cfg.Ts),
            cfg.Mcp,
        ),
        cfg.M,
        cfg.N,
    )
    y_p = pilots.region_vec(rx, cfg.m_p, cfg.L)
    h_hat = estimation.estimate_full_guard(y_p, cfg.gamma_p)
    h_true = channel.extract_pilot_column(
        channel.DDChannelOperator.from_realization(chan, cfg), cfg
    )
    err = np.linalg.norm(h_hat - h_true) / np.linalg.norm(h_true)
    return err < 1e-12, f"relative error {err:.3e} (tol 1e-12)"


def check_split_cancellation():
    """Differencing the two pilot regions cancels a static channel exactly."""
    rng = np.random.default_rng(_RNG_SEED + 3)
    cfg = _random_config(scheme=frame.Scheme.SPLIT_PILOT, M=32, N=16, L=4)
    chan = _random_channel(rng, cfg.L, cfg.Ts, doppler_scale=0.0)
    lay = pilots.layout(cfg.scheme, cfg)
    X = lay.pilot_grid()
    rx = frame.delay_time_to_dd(
        frame.remove_cp(
            channel.apply_ltv(frame.add_cp(frame.dd_to_delay_time(X), cfg.Mcp), chan, cfg.Ts),
            cfg.Mcp,
        ),
        cfg.M,
        cfg.N,
    )
    y_p1 = pilots.region_vec(rx, lay.p1_row, cfg.L)
    y_p2 = pilots.region_vec(rx, lay.p2_row, cfg.L)
    residual = estimation.cancel_pilots_initial(y_p1, y_p2)
    scale = np.linalg.norm(y_p1)
    err = np.linalg.norm(residual) / scale
    return err < 1e-12, f"residual {err:.3e} of the pilot energy (tol 1e-12)"


CHECKS = (
    ("pipeline-equivalence", check_pipeline_equivalence),
    ("block-circulant-duality", check_block_circulant_duality),
    ("pilot-only-identity", check_pilot_only_identity),
    ("full-guard-exactness", check_full_guard_exactness),
    ("split-cancellation", check_split_cancellation),
)


def check_names():
    return [name for name, _ in CHECKS]


def run_selftest(names=None):
    """Run the identity checks; returns [(name, passed, detail)]."""
    selected = set(names) if names else None
    results = []
    for name, fn in CHECKS:
        if selected is not None and name not in selected:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
