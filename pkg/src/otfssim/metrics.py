"""Error metrics: bit error rate and channel-estimate NMSE via operator probing."""

import numpy as np

_PROBE_SEED = 0x0DDB175


def ber(tx_bits, rx_bits):
    """Hamming distance over length."""
    tx = np.asarray(tx_bits)
    rx = np.asarray(rx_bits)
    if tx.shape != rx.shape:
        raise ValueError("bit sequences must have equal length")
    if tx.size == 0:
        raise ValueError("empty bit sequences")
    return float(np.mean(tx != rx))


def nmse(h_true, h_est, n_probes=64, seed=_PROBE_SEED, denominator="estimate"):
    """Frobenius-norm channel-estimation NMSE, ``||T - E||^2 / ||E||^2``.

    The norms are measured by probing both operators with a fixed set of
    vectors: the full canonical basis when the grid is small enough (exact),
    otherwise ``n_probes`` unit-variance complex Gaussian probes (relative
    error of a few percent at the default 64).  ``denominator`` selects the
    estimated ("estimate") or true ("true") channel's norm; the estimated one
    is the reported convention.
    """
    if denominator not in ("estimate", "true"):
        raise ValueError(f"unknown denominator {denominator!r}")
    mn = h_true.shape[1]
    if h_est.shape != h_true.shape:
        raise ValueError("operators must have matching shapes")
    if mn <= n_probes:
        probes = np.eye(mn, dtype=np.complex128)
        scale = 1.0
    else:
        rng = np.random.default_rng(seed)
        probes = (
            rng.standard_normal((mn, n_probes)) + 1j * rng.standard_normal((mn, n_probes))
        ) / np.sqrt(2.0)
        scale = 1.0 / n_probes
    out_true = h_true.forward(probes)
    out_est = h_est.forward(probes)
    num = scale * float(np.sum(np.abs(out_true - out_est) ** 2))
    den_out = out_est if denominator == "estimate" else out_true
    den = scale * float(np.sum(np.abs(den_out) ** 2))
    if den == 0.0:
        return float("nan")
    return num / den
