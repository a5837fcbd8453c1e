"""Delay-Doppler frame conventions: configuration, QAM mapping, transforms, CP.

Conventions fixed here and relied on by every other module:

* Grids are ``M x N`` complex arrays, delay along rows, Doppler along columns.
* Vectorisation is column-major: entry ``(m, n)`` maps to index ``n*M + m``.
* DFT/IDFT pairs are unitary (``1/sqrt(N)`` both ways), applied across the
  Doppler (row) axis.
* QAM constellations are Gray-mapped square alphabets with unit average
  symbol energy; the all-zero bit pattern maps to the most positive corner.
"""

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class Scheme(enum.Enum):
    """Pilot arrangement of a frame."""

    FULL_GUARD = "full_guard"
    REDUCED_GUARD = "reduced_guard"
    SPLIT_PILOT = "split_pilot"

    @classmethod
    def parse(cls, name):
        aliases = {
            "full": cls.FULL_GUARD,
            "full_guard": cls.FULL_GUARD,
            "fullguard": cls.FULL_GUARD,
            "reduced": cls.REDUCED_GUARD,
            "reduced_guard": cls.REDUCED_GUARD,
            "split": cls.SPLIT_PILOT,
            "split_pilot": cls.SPLIT_PILOT,
        }
        key = str(name).strip().lower()
        if key not in aliases:
            raise ValueError(f"unknown scheme {name!r}")
        return aliases[key]


@dataclass
class FrameConfig:
    """Scalar system parameters shared by transmitter, channel and receiver.

    ``gamma_p`` is the total pilot power in linear scale, relative to the
    unit-average-energy data symbols.  ``k`` is the number of delay guard
    rows reclaimed for data in the reduced-guard scheme (defaults to L-1).
    """

    M: int
    N: int
    Ts: float
    L: int
    Mcp: int | None = None
    fc: float = 5.9e9
    delta_f: float = 15e3
    Q: int = 4
    gamma_p: float = 1e4
    scheme: Scheme = Scheme.FULL_GUARD
    m_p: int | None = None
    n_p: int = 0
    k: int | None = None
    n_max: int = 2

    def __post_init__(self):
        if isinstance(self.scheme, str):
            self.scheme = Scheme.parse(self.scheme)
        if self.Mcp is None:
            self.Mcp = self.L
        if self.m_p is None:
            self.m_p = self.M // 2
        if self.k is None:
            self.k = self.L - 1
        self.validate()

    def validate(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("grid dimensions must be positive")
        if self.L < 1:
            raise ValueError("channel length must be positive")
        if self.M < 2 * self.L:
            raise ValueError(f"M={self.M} must be at least 2L={2 * self.L}")
        if self.Ts <= 0:
            raise ValueError("sampling period must be positive")
        if self.Mcp < self.L:
            raise ValueError("CP length must cover the channel length")
        if self.Mcp > self.M * self.N:
            raise ValueError("CP length cannot exceed the frame body")
        if self.gamma_p <= 0:
            raise ValueError("pilot power must be positive")
        if not 0 <= self.n_p < self.N:
            raise ValueError("pilot Doppler bin out of range")
        if self.m_p - (self.L - 1) < 0:
            raise ValueError("pilot region would wrap around the top of the frame")
        # Both split-pilot regions must fit without delay wraparound.
        last_row = (
            self.m_p + 2 * self.L - 1
            if self.scheme is Scheme.SPLIT_PILOT
            else self.m_p + self.L - 1
        )
        if last_row > self.M - 1:
            raise ValueError("pilot region exceeds the frame in delay")
        if not 0 <= self.k <= self.L - 1:
            raise ValueError(f"reclaimed rows k={self.k} must lie in [0, L-1]")
        if self.n_max < 0:
            raise ValueError("iteration cap must be non-negative")
        _validate_alphabet(self.Q)

    @property
    def MN(self):
        return self.M * self.N

    @property
    def M_T(self):
        return self.M * self.N + self.Mcp

    @property
    def delay_resolution(self):
        return self.Ts

    @property
    def doppler_resolution(self):
        return 1.0 / (self.M * self.N * self.Ts)

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.Q))


# ---------------------------------------------------------------------------
# QAM mapping
# ---------------------------------------------------------------------------


def _validate_alphabet(Q):
    k = round(np.log2(Q)) if Q > 1 else 0
    if Q < 4 or 2**k != Q or k % 2 != 0:
        raise ValueError(f"unsupported alphabet size {Q}: square QAM needs a power of 4")
    return k


def _gray_to_binary(g):
    b = g.copy()
    shift = 1
    while (b >> shift).any():
        b ^= b >> shift
        shift *= 2
    return b


@lru_cache(maxsize=8)
def constellation(Q):
    """Gray-mapped square QAM points, indexed by the symbol's bit pattern.

    The first half of the bits selects the in-phase level, the second half the
    quadrature level (MSB first).  Average symbol energy is exactly 1.
    """
    k = _validate_alphabet(Q)
    m = k // 2
    side = 1 << m
    # Gray code g decodes to index i; level runs from +max down to -max so the
    # all-zero pattern lands on the most positive amplitude.
    idx = _gray_to_binary(np.arange(side))
    levels = (side - 1) - 2 * idx
    ints = np.arange(Q)
    i_bits = ints >> m
    q_bits = ints & (side - 1)
    scale = np.sqrt(2.0 * (Q - 1) / 3.0)
    pts = (levels[i_bits] + 1j * levels[q_bits]) / scale
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=8)
def min_distance(Q):
    """Minimum Euclidean distance of the unit-energy constellation."""
    pts = constellation(Q)
    d = np.abs(pts[:, None] - pts[None, :])
    return float(d[d > 0].min())


def qam_modulate(bits, Q):
    """Map a bit sequence onto Gray-coded square QAM symbols."""
    k = _validate_alphabet(Q)
    bits = np.asarray(bits)
    if bits.size % k != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {k}")
    weights = 1 << np.arange(k - 1, -1, -1)
    ints = bits.reshape(-1, k).astype(np.int64) @ weights
    return constellation(Q)[ints]


@lru_cache(maxsize=8)
def _tie_break_order(Q):
    pts = constellation(Q)
    # argmin picks the first minimum, so scan points in ascending (re, im).
    return np.lexsort((pts.imag, pts.real))


def _nearest_indices(symbols, Q):
    pts = constellation(Q)
    order = _tie_break_order(Q)
    flat = np.asarray(symbols).ravel()
    d2 = np.abs(flat[:, None] - pts[order][None, :]) ** 2
    return order[np.argmin(d2, axis=1)]


def qam_demodulate_hard(symbols, Q):
    """Nearest-point hard decision, returning the symbols' bit patterns.

    Ties go to the constellation point with the lexicographically smallest
    (real, imag) pair.
    """
    k = _validate_alphabet(Q)
    idx = _nearest_indices(symbols, Q)
    bits = (idx[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return bits.reshape(-1).astype(np.int8)


def nearest_symbols(symbols, Q):
    """Snap noisy values to their nearest constellation points (same tie rule)."""
    shape = np.shape(symbols)
    idx = _nearest_indices(symbols, Q)
    return constellation(Q)[idx].reshape(shape)


# ---------------------------------------------------------------------------
# Delay-Doppler <-> delay-time transforms and CP handling
# ---------------------------------------------------------------------------


def vec(X):
    """Column-major vectorisation: entry (m, n) -> index n*M + m."""
    return np.asarray(X).flatten(order="F")


def unvec(x, M, N):
    x = np.asarray(x)
    if x.size != M * N:
        raise ValueError(f"cannot reshape length {x.size} into {M}x{N}")
    return x.reshape((M, N), order="F")


def dd_to_delay_time(X):
    """N-point unitary IDFT across each row, then column stacking."""
    X = np.asarray(X)
    return np.fft.ifft(X, axis=1, norm="ortho").flatten(order="F")


def delay_time_to_dd(r, M, N):
    """Inverse of :func:`dd_to_delay_time`; returns the M x N grid."""
    r = np.asarray(r)
    if r.size != M * N:
        raise ValueError(f"sample vector length {r.size} != M*N = {M * N}")
    return np.fft.fft(r.reshape((M, N), order="F"), axis=1, norm="ortho")


def add_cp(s, Mcp):
    """Prepend the last ``Mcp`` samples as a cyclic prefix (axis 0)."""
    s = np.asarray(s)
    if Mcp > s.shape[0]:
        raise ValueError("CP longer than the signal")
    return np.concatenate([s[s.shape[0] - Mcp :], s], axis=0)


def remove_cp(r, Mcp):
    """Drop the first ``Mcp`` samples (axis 0)."""
    r = np.asarray(r)
    if Mcp >= r.shape[0]:
        raise ValueError("CP removal would consume the whole signal")
    return r[Mcp:]
