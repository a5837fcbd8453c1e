"""Linear time-varying channels: EVA/Jakes sampling, application, DD operator.

The tapped delay line is indexed by input time: the sample entering the
channel at absolute time ``u`` (CP included, first transmitted sample is
``u = 0``) reaches the output at ``u + l`` weighted by
``gain * exp(2j*pi*doppler*u*Ts)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.linalg import dft

from . import kernels

# Extended Vehicular A power-delay profile: excess delays (ns) and mean path
# powers (dB).
EVA_DELAYS_NS = (0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)


@dataclass(frozen=True)
class ChannelPath:
    delay_tap: int
    doppler_hz: float
    gain: complex

    def __post_init__(self):
        if self.delay_tap < 0:
            raise ValueError("delay tap must be non-negative")


@dataclass
class ChannelRealization:
    """A sparse set of propagation paths drawn from a fading model."""

    paths: list

    @property
    def L(self):
        return max(p.delay_tap for p in self.paths) + 1

    def total_power(self):
        return float(sum(abs(p.gain) ** 2 for p in self.paths))

    def tap_gains(self, num_samples, Ts):
        """Input-time tap trajectories, shape (L, num_samples)."""
        G = np.zeros((self.L, num_samples), dtype=np.complex128)
        u = np.arange(num_samples)
        for p in self.paths:
            G[p.delay_tap] += p.gain * np.exp(2j * np.pi * p.doppler_hz * Ts * u)
        return G


def max_doppler_hz(speed_kmh, fc):
    return fc * (speed_kmh / 3.6) / SPEED_OF_LIGHT


def eva_channel_length(Ts):
    """Discrete channel length implied by the EVA delay spread at rate 1/Ts."""
    if Ts <= 0:
        raise ValueError("sampling period must be positive")
    return max(1, round(EVA_DELAYS_NS[-1] * 1e-9 / Ts))


def sample_eva_channel(rng, speed_kmh, fc, Ts):
    """Draw one EVA realization with Jakes Doppler at the given speed.

    Each profile tap becomes one path: delay quantised to the nearest sample
    (clipped into the profile's overall length), Rayleigh gain with variance
    from the normalised power profile, Doppler ``nu_max*cos(theta)`` with
    ``theta`` uniform.  Deterministic for a given generator state.
    """
    if Ts <= 0:
        raise ValueError("sampling period must be positive")
    if speed_kmh < 0:
        raise ValueError("speed must be non-negative")
    rng = np.random.default_rng(rng)
    L = eva_channel_length(Ts)
    delays = np.array(EVA_DELAYS_NS) * 1e-9
    taps = np.minimum(np.round(delays / Ts).astype(int), L - 1)
    powers = 10.0 ** (np.asarray(EVA_POWERS_DB) / 10.0)
    powers = powers / powers.sum()
    nu_max = max_doppler_hz(speed_kmh, fc)
    gains = np.sqrt(powers / 2.0) * (
        rng.standard_normal(len(taps)) + 1j * rng.standard_normal(len(taps))
    )
    thetas = rng.uniform(0.0, 2.0 * np.pi, len(taps))
    paths = [
        ChannelPath(int(t), float(nu_max * np.cos(th)), complex(g))
        for t, th, g in zip(taps, thetas, gains)
    ]
    return ChannelRealization(paths)


def apply_ltv(s, chan, Ts):
    """Pass a sample vector through the time-varying channel (no noise).

    Causal: output m only sees inputs m - l >= 0, so the frame start is not
    wrapped.
    """
    s = np.asarray(s, dtype=np.complex128)
    return kernels.apply_taps(chan.tap_gains(s.shape[0], Ts), s)


def delay_time_matrix(chan, size, Ts):
    """Dense time-domain channel matrix, built element-wise from the paths."""
    H = np.zeros((size, size), dtype=np.complex128)
    u = np.arange(size)
    for p in chan.paths:
        rows = u + p.delay_tap
        keep = rows < size
        H[rows[keep], u[keep]] += p.gain * np.exp(
            2j * np.pi * p.doppler_hz * Ts * u[keep]
        )
    return H


def build_heff_oracle(chan, cfg, cap=2048):
    """Dense DD-domain effective channel, composed factor by factor.

    Intended for tests and small-size cross-checks; refuses to materialise
    grids above ``cap`` cells.
    """
    MN = cfg.MN
    if MN > cap:
        raise ValueError(f"grid of {MN} cells exceeds the dense-materialisation cap {cap}")
    M, N, Mcp = cfg.M, cfg.N, cfg.Mcp
    F = dft(N, scale="sqrtn")
    eye_mn = np.eye(MN)
    A_cp = np.vstack([eye_mn[MN - Mcp :], eye_mn])
    R_cp = np.hstack([np.zeros((MN, Mcp)), eye_mn])
    H = delay_time_matrix(chan, cfg.M_T, cfg.Ts)
    to_dd = np.kron(F, np.eye(M))
    from_dd = np.kron(F.conj().T, np.eye(M))
    return to_dd @ (R_cp @ (H @ (A_cp @ from_dd)))


class DDChannelOperator:
    """Matrix-free DD-domain effective channel (forward and adjoint).

    Wraps a tapped delay line applied to the CP-extended delay-time signal
    between the unitary Doppler transforms.  Immutable after construction;
    safe for concurrent read-only application.  Accepts single vectors of
    length M*N or (M*N, k) stacks.
    """

    def __init__(self, taps, M, N, Mcp):
        taps = np.ascontiguousarray(taps, dtype=np.complex128)
        if taps.shape[1] != M * N + Mcp:
            raise ValueError("tap trajectories must span the CP-extended frame")
        self.taps = taps
        self.M, self.N, self.Mcp = M, N, Mcp
        self.shape = (M * N, M * N)

    @classmethod
    def from_realization(cls, chan, cfg):
        return cls(chan.tap_gains(cfg.M_T, cfg.Ts), cfg.M, cfg.N, cfg.Mcp)

    def _split(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.ndim == 1:
            return x[:, None], True
        return x, False

    def forward(self, x):
        M, N, Mcp = self.M, self.N, self.Mcp
        x2, squeeze = self._split(x)
        K = x2.shape[1]
        grid = x2.reshape((M, N, K), order="F")
        u = np.fft.ifft(grid, axis=1, norm="ortho").reshape((M * N, K), order="F")
        s = np.concatenate([u[M * N - Mcp :], u], axis=0)
        r = kernels.apply_taps(self.taps, s)
        v = r[Mcp:]
        Y = np.fft.fft(v.reshape((M, N, K), order="F"), axis=1, norm="ortho")
        y = Y.reshape((M * N, K), order="F")
        return y[:, 0] if squeeze else y

    def adjoint(self, y):
        M, N, Mcp = self.M, self.N, self.Mcp
        y2, squeeze = self._split(y)
        K = y2.shape[1]
        grid = y2.reshape((M, N, K), order="F")
        v = np.fft.ifft(grid, axis=1, norm="ortho").reshape((M * N, K), order="F")
        r = np.concatenate([np.zeros((Mcp, K), dtype=np.complex128), v], axis=0)
        s = kernels.apply_taps_adjoint(self.taps, r)
        u = s[Mcp:].copy()
        u[M * N - Mcp :] += s[:Mcp]
        X = np.fft.fft(u.reshape((M, N, K), order="F"), axis=1, norm="ortho")
        x = X.reshape((M * N, K), order="F")
        return x[:, 0] if squeeze else x

    def dense(self, cap=2048):
        MN = self.shape[0]
        if MN > cap:
            raise ValueError(f"grid of {MN} cells exceeds the dense-materialisation cap {cap}")
        return self.forward(np.eye(MN, dtype=np.complex128))


def extract_pilot_column(h_eff, cfg):
    """Ground-truth pilot-column response: length L*N, delay-major per block.

    ``h[n*L + i]`` is the response at delay offset ``i`` and Doppler offset
    ``n`` from the pilot bin, read from the effective channel's column at
    ``(m_p, n_p)``.
    """
    M, N, L, m_p, n_p = cfg.M, cfg.N, cfg.L, cfg.m_p, cfg.n_p
    if not (0 <= m_p and m_p + L <= M):
        raise ValueError("pilot position out of range")
    col_index = n_p * M + m_p
    if hasattr(h_eff, "forward"):
        e = np.zeros(M * N, dtype=np.complex128)
        e[col_index] = 1.0
        column = h_eff.forward(e)
    else:
        column = np.asarray(h_eff)[:, col_index]
    h = np.empty(L * N, dtype=np.complex128)
    for n in range(N):
        rows = ((n + n_p) % N) * M + m_p + np.arange(L)
        h[n * L : (n + 1) * L] = column[rows]
    return h


def save_paths(path, chan):
    """Dump a realization as one ``delay_tap doppler_hz gain_re gain_im`` line per path."""
    with open(path, "w", encoding="ascii") as fh:
        for p in chan.paths:
            fh.write(
                f"{p.delay_tap} {p.doppler_hz!r} {p.gain.real!r} {p.gain.imag!r}\n"
            )


def load_paths(path):
    paths = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            fields = line.split()
            if not fields:
                continue
            tap, nu, re, im = fields
            paths.append(ChannelPath(int(tap), float(nu), complex(float(re), float(im))))
    return ChannelRealization(paths)
