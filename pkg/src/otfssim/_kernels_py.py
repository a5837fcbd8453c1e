"""Pure-NumPy fallback for the compiled tap kernels (same call signatures)."""

import numpy as np


def tap_convolve(taps, x, out):
    """out[u+l, k] = sum_l taps[l, u] * x[u, k] (causal, zero front fill)."""
    out[:] = 0
    n = x.shape[0]
    for l in range(taps.shape[0]):
        if l == 0:
            out += taps[0][:, None] * x
        else:
            out[l:] += taps[l, : n - l, None] * x[: n - l]


def tap_convolve_adjoint(taps, y, out):
    """out[u, k] = sum_l conj(taps[l, u]) * y[u+l, k]."""
    out[:] = 0
    n = y.shape[0]
    for l in range(taps.shape[0]):
        if l == 0:
            out += np.conj(taps[0])[:, None] * y
        else:
            out[: n - l] += np.conj(taps[l, : n - l])[:, None] * y[l:]
