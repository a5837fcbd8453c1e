"""Tap-kernel dispatch: compiled extension when available, NumPy otherwise.

The compiled kernels cover the single-vector case, which is the hot loop of
the iterative solver; batched (matrix) inputs always use the vectorised NumPy
implementation.  Set ``OTFSSIM_PURE_PYTHON=1`` to force the NumPy backend
everywhere (used by the benchmark and for debugging).
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("OTFSSIM_PURE_PYTHON"):
    _compiled = None
    BACKEND = "python"
else:
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _compiled = None
        BACKEND = "python"


def _check(taps, x):
    if taps.shape[1] != x.shape[0]:
        raise ValueError("taps and input length mismatch")
    if x.ndim not in (1, 2):
        raise ValueError(f"expected 1-D or 2-D input, got shape {x.shape}")


def apply_taps(taps, x):
    """Apply a causal tapped delay line: r[t] = sum_l taps[l, t-l] * x[t-l].

    ``taps`` has shape (L, n) and is indexed by input time; ``x`` is (n,) or
    (n, k) for batched application.
    """
    taps = np.ascontiguousarray(taps, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    _check(taps, x)
    if x.ndim == 1 and _compiled is not None:
        out = np.empty_like(x)
        _compiled.tap_convolve(taps, np.ascontiguousarray(x), out)
        return out
    x2 = x[:, None] if x.ndim == 1 else x
    out = np.empty_like(x2)
    _kernels_py.tap_convolve(taps, x2, out)
    return out[:, 0] if x.ndim == 1 else out


def apply_taps_adjoint(taps, y):
    """Adjoint of :func:`apply_taps`: s[u] = sum_l conj(taps[l, u]) * y[u+l]."""
    taps = np.ascontiguousarray(taps, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    _check(taps, y)
    if y.ndim == 1 and _compiled is not None:
        out = np.empty_like(y)
        _compiled.tap_convolve_adjoint(taps, np.ascontiguousarray(y), out)
        return out
    y2 = y[:, None] if y.ndim == 1 else y
    out = np.empty_like(y2)
    _kernels_py.tap_convolve_adjoint(taps, y2, out)
    return out[:, 0] if y.ndim == 1 else out
