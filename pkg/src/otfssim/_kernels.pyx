"""Compiled hot loops: tapped delay-line application and its adjoint.

Tap convention: ``taps[l, u]`` is the complex gain that the input sample at
time ``u`` picks up on its way to the output sample at time ``u + l``.
Single-vector kernels only; batched inputs go through the NumPy fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def tap_convolve(const double complex[:, ::1] taps,
                 const double complex[::1] x,
                 double complex[::1] out):
    """out[u+l] = sum_l taps[l, u] * x[u] (causal, zero front fill)."""
    cdef Py_ssize_t L = taps.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t l, u

    for u in range(n):
        out[u] = 0
    for l in range(L):
        for u in range(n - l):
            out[u + l] = out[u + l] + taps[l, u] * x[u]


def tap_convolve_adjoint(const double complex[:, ::1] taps,
                         const double complex[::1] y,
                         double complex[::1] out):
    """out[u] = sum_l conj(taps[l, u]) * y[u+l]."""
    cdef Py_ssize_t L = taps.shape[0]
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t l, u

    for u in range(n):
        out[u] = 0
    for l in range(L):
        for u in range(n - l):
            out[u] = out[u] + taps[l, u].conjugate() * y[u + l]
