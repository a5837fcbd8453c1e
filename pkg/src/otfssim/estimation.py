"""Channel estimation from impulse pilots and its supporting algebra.

The received pilot region (``L`` delay rows from the impulse downwards, all
``N`` Doppler bins, vectorised delay-major) factors as a block-circulant
matrix of transmitted symbols acting on the pilot-column response ``h`` of
length ``L*N``.  With the impulse at Doppler bin 0 the pilot's own block
matrix is a scaled identity, so estimation is a single division; data
spilling into the region appears as additive interference that the iterative
receivers cancel with detected symbols.

``ChannelInterpolator`` turns an estimated ``h`` into a full effective
channel: per delay tap, an N-point IDFT recovers the tap's time samples at
the pilot's own time support, a natural cubic spline (flat beyond the
outermost anchors) tracks the tap across the whole CP-extended frame, and the
resulting trajectories feed the matrix-free channel operator.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .channel import DDChannelOperator


class BlockCirculantSymbols:
    """Block-circulant operator generated by a (2L-1) x N symbol window.

    Block ``(r, c)`` is the L x L Toeplitz slice of window column
    ``(r - c) mod N``; applying the operator to a pilot-column response ``h``
    reproduces the region's received contribution from those symbols.
    """

    def __init__(self, window):
        window = np.asarray(window, dtype=np.complex128)
        if window.ndim != 2 or window.shape[0] % 2 == 0:
            raise ValueError("symbol window must be (2L-1) x N")
        self.window = window
        self.L = (window.shape[0] + 1) // 2
        self.N = window.shape[1]
        self._wf = np.fft.fft(window, axis=1)
        ii, jj = np.meshgrid(np.arange(self.L), np.arange(self.L), indexing="ij")
        self._delay_idx = self.L - 1 + ii - jj

    @property
    def shape(self):
        n = self.L * self.N
        return (n, n)

    def apply(self, h):
        """Circular convolution over Doppler, banded Toeplitz over delay."""
        h = np.asarray(h, dtype=np.complex128)
        if h.size != self.L * self.N:
            raise ValueError(f"expected length {self.L * self.N}, got {h.size}")
        hf = np.fft.fft(h.reshape(self.N, self.L), axis=0)
        # T[n, i, j] = window_fft[L-1+i-j, n]
        T = self._wf[self._delay_idx].transpose(2, 0, 1)
        out_f = np.einsum("nij,nj->ni", T, hf)
        return np.fft.ifft(out_f, axis=0).reshape(-1)

    def dense(self):
        L, N = self.L, self.N
        S = np.zeros((L * N, L * N), dtype=np.complex128)
        for r in range(N):
            for c in range(N):
                S[r * L : (r + 1) * L, c * L : (c + 1) * L] = self.window[
                    self._delay_idx, (r - c) % N
                ]
        return S


def build_sbc(window):
    """Block-circulant symbol operator for a (2L-1) x N transmit window."""
    return BlockCirculantSymbols(window)


def _check_pilot_power(gamma_p):
    if gamma_p <= 0:
        raise ValueError("pilot power must be positive")


def estimate_full_guard(y_p, gamma_p):
    """Single-shot estimate from a data-free pilot region: h_hat = y_p / sqrt(gamma_p)."""
    _check_pilot_power(gamma_p)
    return np.asarray(y_p, dtype=np.complex128) / np.sqrt(gamma_p)


def estimate_reduced_guard(y_p, gamma_p):
    """Same arithmetic as the full-guard estimate, but the reclaimed data rows
    leave their interference inside the result (absorbed as extra noise)."""
    _check_pilot_power(gamma_p)
    return np.asarray(y_p, dtype=np.complex128) / np.sqrt(gamma_p)


def refine_reduced_guard(y_p, sd_prev, h_prev, gamma_p):
    """Cancel the previous iteration's detected-data contribution, then re-estimate."""
    _check_pilot_power(gamma_p)
    if sd_prev is None or h_prev is None:
        raise ValueError("refinement needs detected data and an estimate from a previous iteration")
    y_p = np.asarray(y_p, dtype=np.complex128)
    return (y_p - sd_prev.apply(h_prev)) / np.sqrt(gamma_p)


def remove_pilot_reduced(y_p, h_hat, gamma_p):
    """Subtract the impulse response implied by the estimate from its own region.

    Because the estimate itself carries the data tail, what is left is the
    *estimated* data contribution: the region's true data energy is destroyed.
    """
    _check_pilot_power(gamma_p)
    return np.asarray(y_p, dtype=np.complex128) - np.sqrt(gamma_p) * np.asarray(h_hat)


def estimate_split_initial(y_p1, y_p2, gamma_p):
    """Per-impulse estimates from the two half-power pilots, plus their average."""
    _check_pilot_power(gamma_p)
    scale = np.sqrt(2.0) / np.sqrt(gamma_p)
    h1 = scale * np.asarray(y_p1, dtype=np.complex128)
    h2 = scale * np.asarray(y_p2, dtype=np.complex128)
    return h1, h2, 0.5 * (h1 + h2)


def cancel_pilots_initial(y_p1, y_p2):
    """Difference of the two received pilot regions.

    The impulse contributions cancel (exactly for a channel that does not
    move within the two regions); the data contributions of both regions
    survive, the first with a sign flip that the detector's channel model
    absorbs.
    """
    return np.asarray(y_p2, dtype=np.complex128) - np.asarray(y_p1, dtype=np.complex128)


def refine_split(y_p1, y_p2, sd1_prev, sd2_prev, gamma_p, prior1, prior2):
    """Cancel detected data from each pilot region and re-estimate both impulses.

    ``prior1``/``prior2`` are the channel estimates multiplied into the
    detected-symbol operators; the orchestrator passes either the previous
    averaged estimate (default) or the per-impulse ones.
    """
    _check_pilot_power(gamma_p)
    if sd1_prev is None or sd2_prev is None or prior1 is None or prior2 is None:
        raise ValueError("refinement needs detected data and estimates from a previous iteration")
    scale = np.sqrt(2.0) / np.sqrt(gamma_p)
    h1 = scale * (np.asarray(y_p1, dtype=np.complex128) - sd1_prev.apply(prior1))
    h2 = scale * (np.asarray(y_p2, dtype=np.complex128) - sd2_prev.apply(prior2))
    return h1, h2


class ChannelInterpolator:
    """Spline tracker from a pilot-column estimate to full tap trajectories.

    ``anchor_delay`` is the delay row of the impulse the estimate came from;
    the N anchor instants sit at that row's position in each delay-time block
    (body time ``q = n*M + anchor_delay``; the tap phase reference starts at
    the CP, ``Mcp`` samples earlier).
    """

    def __init__(self, h_hat, anchor_delay, cfg):
        h_hat = np.asarray(h_hat, dtype=np.complex128)
        N = cfg.N
        if h_hat.size % N != 0:
            raise ValueError("estimate length must be L*N")
        self.L = h_hat.size // N
        self.cfg = cfg
        self.anchor_delay = int(anchor_delay)
        self.anchors = self.anchor_delay + cfg.M * np.arange(N)
        # Tap samples at the anchor instants: unnormalised inverse DFT of each
        # tap's Doppler profile.
        self._anchor_vals = np.fft.ifft(h_hat.reshape(N, self.L), axis=0) * N
        if N >= 4:
            self._spline = CubicSpline(
                self.anchors, self._anchor_vals, axis=0, bc_type="not-a-knot"
            )
        else:
            self._spline = None  # too few anchors for a cubic; hold nearest

    def _eval(self, times):
        if self._spline is not None:
            # The end polynomials extend the spline beyond the outermost
            # anchors; with natural boundary conditions they are close to
            # linear, and the spans involved are under one anchor interval.
            return self._spline(times)
        t = np.clip(times, self.anchors[0], self.anchors[-1])
        idx = np.clip(
            np.round((t - self.anchors[0]) / self.cfg.M).astype(int),
            0,
            len(self.anchors) - 1,
        )
        return self._anchor_vals[idx]

    def tap_gains(self):
        """Input-time trajectories over the CP-extended frame, shape (L, M_T)."""
        body_time = np.arange(self.cfg.M_T) - self.cfg.Mcp
        return np.ascontiguousarray(self._eval(body_time).T)

    def operator(self):
        return DDChannelOperator(self.tap_gains(), self.cfg.M, self.cfg.N, self.cfg.Mcp)

    def response_at(self, anchor_delay):
        """Pilot-column response re-anchored at another impulse's time support."""
        times = int(anchor_delay) + self.cfg.M * np.arange(self.cfg.N)
        vals = self._eval(times)
        return (np.fft.fft(vals, axis=0) / self.cfg.N).reshape(-1)


def interpolate_to_heff(h_hat, anchor_delay, cfg):
    """Effective-channel operator reconstructed from a pilot-column estimate."""
    return ChannelInterpolator(h_hat, anchor_delay, cfg).operator()


def remove_pilots_cross(Y, interp1, interp2, gamma_p, lay):
    """Cross-cancel the two split impulses from a received frame.

    Each impulse is removed using the *other* impulse's interpolated estimate
    evaluated at its own time support, so the data tails inside both regions
    survive the subtraction.
    """
    _check_pilot_power(gamma_p)
    if lay.n_p != 0:
        raise ValueError("pilot removal is derived for Doppler bin 0 pilots only")
    amp = np.sqrt(gamma_p / 2.0)
    L, N = lay.L, lay.N
    Yc = np.array(Y, dtype=np.complex128, copy=True)
    h_for_p1 = interp2.response_at(lay.p1_row)
    h_for_p2 = interp1.response_at(lay.p2_row)
    Yc[lay.p1_row : lay.p1_row + L, :] -= (amp * h_for_p1).reshape((L, N), order="F")
    Yc[lay.p2_row : lay.p2_row + L, :] -= (amp * h_for_p2).reshape((L, N), order="F")
    return Yc
