"""Time-varying channel model: EVA sampling, application, effective channel."""

import numpy as np
import pytest

from otfssim.channel import (
    ChannelPath,
    ChannelRealization,
    DDChannelOperator,
    apply_ltv,
    build_heff_oracle,
    delay_time_matrix,
    eva_channel_length,
    extract_pilot_column,
    load_paths,
    max_doppler_hz,
    sample_eva_channel,
    save_paths,
)
from otfssim.frame import (
    FrameConfig,
    add_cp,
    dd_to_delay_time,
    delay_time_to_dd,
    remove_cp,
    unvec,
    vec,
)


def random_paths(rng, L, mn_ts, doppler_bins=0.3):
    """L paths, one per tap, Doppler a fraction of a bin (1/(M*N*Ts))."""
    paths = []
    for tap in range(L):
        nu = doppler_bins * rng.uniform(-1, 1) / mn_ts
        g = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2 * L)
        paths.append(ChannelPath(tap, nu, complex(g)))
    return ChannelRealization(paths)


class TestEvaSampling:
    def test_channel_length_at_reference_rates(self):
        assert eva_channel_length(520.3e-9) == 5
        assert eva_channel_length(133.33e-9) == 19

    def test_sampled_realization_length_matches(self):
        chan = sample_eva_channel(0, 500.0, 5.9e9, 520.3e-9)
        assert chan.L == 5
        chan = sample_eva_channel(0, 500.0, 5.9e9, 133.33e-9)
        assert chan.L == 19

    def test_zero_speed_is_time_invariant(self):
        chan = sample_eva_channel(3, 0.0, 5.9e9, 520.3e-9)
        assert all(p.doppler_hz == 0.0 for p in chan.paths)

    def test_doppler_bounded_by_maximum(self):
        nu_max = max_doppler_hz(500.0, 5.9e9)
        for seed in range(50):
            chan = sample_eva_channel(seed, 500.0, 5.9e9, 520.3e-9)
            assert all(abs(p.doppler_hz) <= nu_max * (1 + 1e-12) for p in chan.paths)

    def test_deterministic_given_seed(self):
        a = sample_eva_channel(42, 500.0, 5.9e9, 520.3e-9)
        b = sample_eva_channel(42, 500.0, 5.9e9, 520.3e-9)
        assert a.paths == b.paths

    def test_average_power_normalised(self):
        powers = [
            sample_eva_channel(s, 500.0, 5.9e9, 520.3e-9).total_power()
            for s in range(2000)
        ]
        assert np.mean(powers) == pytest.approx(1.0, abs=0.05)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            sample_eva_channel(0, 500.0, 5.9e9, 0.0)
        with pytest.raises(ValueError):
            sample_eva_channel(0, -1.0, 5.9e9, 1e-6)


class TestApplyLtv:
    def test_identity_path(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        chan = ChannelRealization([ChannelPath(0, 0.0, 1.0 + 0j)])
        assert np.allclose(apply_ltv(s, chan, 1e-6), s, atol=1e-15)

    def test_pure_delay_zero_fills_front(self):
        s = np.arange(1.0, 11.0) + 0j
        chan = ChannelRealization([ChannelPath(2, 0.0, 1.0 + 0j)])
        out = apply_ltv(s, chan, 1e-6)
        assert np.all(out[:2] == 0)
        assert np.allclose(out[2:], s[:-2])

    def test_matches_dense_elementwise_matrix(self):
        # Oracle: the dense time-domain matrix built element by element.
        rng = np.random.default_rng(7)
        n, Ts = 60, 1e-6
        chan = random_paths(rng, 4, n * Ts)
        s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        H = np.zeros((n, n), dtype=complex)
        for m in range(n):
            for p in chan.paths:
                q = m - p.delay_tap
                if q >= 0:
                    H[m, q] += p.gain * np.exp(2j * np.pi * p.doppler_hz * q * Ts)
        assert np.allclose(apply_ltv(s, chan, Ts), H @ s, atol=1e-12)
        assert np.allclose(delay_time_matrix(chan, n, Ts), H, atol=1e-15)

    def test_energy_preserved_on_average(self):
        rng = np.random.default_rng(123)
        n, Ts = 256, 1e-6
        s = np.exp(2j * np.pi * rng.random(n))
        ratios = []
        for seed in range(1000):
            chan = sample_eva_channel(seed, 500.0, 5.9e9, 520.3e-9)
            r = apply_ltv(s, chan, Ts)
            ratios.append(np.linalg.norm(r) ** 2 / np.linalg.norm(s) ** 2)
        assert np.mean(ratios) == pytest.approx(1.0, abs=0.06)


class TestEffectiveChannel:
    def setup_method(self):
        self.cfg = FrameConfig(M=32, N=16, Ts=1e-6, L=4, Mcp=4, m_p=16)

    def test_identity_channel_gives_identity(self):
        chan = ChannelRealization([ChannelPath(0, 0.0, 1.0 + 0j)])
        H = build_heff_oracle(chan, self.cfg)
        assert np.allclose(H, np.eye(self.cfg.MN), atol=1e-12)

    def test_pipeline_equivalence_over_random_channels(self):
        rng = np.random.default_rng(99)
        cfg = self.cfg
        for _ in range(20):
            chan = random_paths(rng, cfg.L, cfg.MN * cfg.Ts)
            H = build_heff_oracle(chan, cfg)
            x = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
            y_pipe = delay_time_to_dd(
                remove_cp(
                    apply_ltv(
                        add_cp(dd_to_delay_time(unvec(x, cfg.M, cfg.N)), cfg.Mcp),
                        chan,
                        cfg.Ts,
                    ),
                    cfg.Mcp,
                ),
                cfg.M,
                cfg.N,
            )
            err = np.linalg.norm(H @ x - vec(y_pipe)) / np.linalg.norm(x)
            assert err < 1e-9

    def test_operator_agrees_with_dense_oracle(self):
        rng = np.random.default_rng(5)
        cfg = self.cfg
        chan = random_paths(rng, cfg.L, cfg.MN * cfg.Ts)
        H = build_heff_oracle(chan, cfg)
        op = DDChannelOperator.from_realization(chan, cfg)
        x = rng.standard_normal((cfg.MN, 3)) + 1j * rng.standard_normal((cfg.MN, 3))
        assert np.allclose(op.forward(x), H @ x, atol=1e-9)
        y = rng.standard_normal((cfg.MN, 3)) + 1j * rng.standard_normal((cfg.MN, 3))
        assert np.allclose(op.adjoint(y), H.conj().T @ y, atol=1e-9)

    def test_operator_adjoint_identity(self):
        rng = np.random.default_rng(6)
        cfg = self.cfg
        chan = random_paths(rng, cfg.L, cfg.MN * cfg.Ts)
        op = DDChannelOperator.from_realization(chan, cfg)
        x = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
        y = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
        assert np.vdot(y, op.forward(x)) == pytest.approx(
            np.vdot(op.adjoint(y), x), rel=1e-10
        )

    def test_time_invariant_channel_is_doppler_diagonal(self):
        # Without Doppler, the DD channel cannot mix Doppler bins: with
        # delay-major vectorisation it is block-diagonal, circulant blocks.
        rng = np.random.default_rng(8)
        cfg = self.cfg
        paths = [
            ChannelPath(t, 0.0, complex(rng.standard_normal(), rng.standard_normal()))
            for t in range(cfg.L)
        ]
        H = build_heff_oracle(ChannelRealization(paths), cfg)
        M, N = cfg.M, cfg.N
        blocks = H.reshape(N, M, N, M).transpose(0, 2, 1, 3)
        off = sum(
            np.linalg.norm(blocks[r, c]) ** 2 for r in range(N) for c in range(N) if r != c
        )
        assert off < 1e-20
        blk = blocks[0, 0]
        for i in range(M):
            assert np.allclose(np.roll(blk[:, 0], i), blk[:, i], atol=1e-12)

    def test_materialisation_cap(self):
        chan = ChannelRealization([ChannelPath(0, 0.0, 1.0 + 0j)])
        with pytest.raises(ValueError):
            build_heff_oracle(chan, self.cfg, cap=16)


class TestPilotColumn:
    def test_identity_channel_column(self):
        cfg = FrameConfig(M=16, N=8, Ts=1e-6, L=3, Mcp=3, m_p=8)
        chan = ChannelRealization([ChannelPath(0, 0.0, 1.0 + 0j)])
        h = extract_pilot_column(build_heff_oracle(chan, cfg), cfg)
        expected = np.zeros(cfg.L * cfg.N, dtype=complex)
        expected[0] = 1.0
        assert np.allclose(h, expected, atol=1e-12)

    def test_single_delayed_path(self):
        cfg = FrameConfig(M=16, N=8, Ts=1e-6, L=3, Mcp=3, m_p=8)
        chan = ChannelRealization([ChannelPath(2, 0.0, 1.0 + 0j)])
        h = extract_pilot_column(build_heff_oracle(chan, cfg), cfg)
        assert abs(h[2]) == pytest.approx(1.0, abs=1e-12)
        mask = np.ones(h.size, dtype=bool)
        mask[2] = False
        assert np.linalg.norm(h[mask]) < 1e-12

    def test_received_pilot_region_equals_scaled_column(self):
        # A pilot-only frame received through the true channel reproduces the
        # extracted column exactly, Doppler included.
        rng = np.random.default_rng(21)
        cfg = FrameConfig(M=32, N=16, Ts=1e-6, L=4, Mcp=4, m_p=16)
        chan = random_paths(rng, cfg.L, cfg.MN * cfg.Ts, doppler_bins=0.8)
        amp = np.sqrt(cfg.gamma_p)
        X = np.zeros((cfg.M, cfg.N), dtype=complex)
        X[cfg.m_p, 0] = amp
        Y = delay_time_to_dd(
            remove_cp(
                apply_ltv(add_cp(dd_to_delay_time(X), cfg.Mcp), chan, cfg.Ts), cfg.Mcp
            ),
            cfg.M,
            cfg.N,
        )
        y_p = Y[cfg.m_p : cfg.m_p + cfg.L, :].flatten(order="F")
        h = extract_pilot_column(DDChannelOperator.from_realization(chan, cfg), cfg)
        assert np.allclose(y_p, amp * h, atol=1e-10)

    def test_out_of_range_position(self):
        cfg = FrameConfig(M=16, N=8, Ts=1e-6, L=3, Mcp=3, m_p=8)
        chan = ChannelRealization([ChannelPath(0, 0.0, 1.0 + 0j)])
        H = build_heff_oracle(chan, cfg)
        cfg.m_p = 14
        with pytest.raises(ValueError):
            extract_pilot_column(H, cfg)


def test_path_dump_round_trip(tmp_path):
    chan = sample_eva_channel(9, 500.0, 5.9e9, 520.3e-9)
    f = tmp_path / "paths.txt"
    save_paths(f, chan)
    loaded = load_paths(f)
    assert loaded.paths == chan.paths
