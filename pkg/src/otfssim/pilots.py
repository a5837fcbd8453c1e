"""Pilot layouts: impulse placement, guard geometry, data/pilot multiplexing.

Three arrangements are supported.  All place the (first) impulse at delay bin
``m_p``, Doppler bin ``n_p``:

* full guard:    rows ``m_p-L+1 .. m_p+L-1`` carry no data at all;
* reduced guard: the ``k`` topmost of those rows are reclaimed for data;
* split pilot:   two impulses of half power at ``m_p`` and ``m_p+L`` share
  the guard rows ``m_p .. m_p+L-1``; the second impulse is superimposed on a
  regular data symbol, so its cell belongs to both the pilot and data sets.
"""

from dataclasses import dataclass, field

import numpy as np

from .frame import Scheme


@dataclass
class PilotLayout:
    scheme: Scheme
    M: int
    N: int
    m_p: int
    n_p: int
    L: int
    k: int
    pilot_cells: tuple  # ((m, n, amplitude), ...)
    guard_mask: np.ndarray = field(repr=False)
    data_mask: np.ndarray = field(repr=False)

    @property
    def pilot_mask(self):
        mask = np.zeros((self.M, self.N), dtype=bool)
        for m, n, _ in self.pilot_cells:
            mask[m, n] = True
        return mask

    @property
    def pilot_energy(self):
        return float(sum(abs(a) ** 2 for _, _, a in self.pilot_cells))

    def pilot_grid(self):
        P = np.zeros((self.M, self.N), dtype=np.complex128)
        for m, n, amp in self.pilot_cells:
            P[m, n] += amp
        return P

    def overhead_cells(self):
        """Cells unavailable for data (pilot-only plus guard)."""
        pure_pilot = self.pilot_mask & ~self.data_mask
        return int(self.guard_mask.sum() + pure_pilot.sum())

    # Received-region geometry used by the estimators.
    @property
    def p1_row(self):
        return self.m_p

    @property
    def p2_row(self):
        if self.scheme is not Scheme.SPLIT_PILOT:
            raise ValueError("second pilot region exists only for the split layout")
        return self.m_p + self.L

    def interference_rows(self, region):
        """Row window of transmitted symbols that spill into a received region."""
        if region == 1:
            start = self.m_p - self.L + 1
        elif region == 2:
            start = self.p2_row - self.L + 1
        else:
            raise ValueError("region must be 1 or 2")
        return start, start + 2 * self.L - 1

    def data_support_mask(self):
        """Data cells whose transmit rows spill into the received pilot regions."""
        mask = np.zeros((self.M, self.N), dtype=bool)
        regions = (1, 2) if self.scheme is Scheme.SPLIT_PILOT else (1,)
        for r in regions:
            lo, hi = self.interference_rows(r)
            mask[lo:hi, :] = True
        return mask & self.data_mask


def region_vec(Y, row0, L):
    """Vectorise rows ``row0 .. row0+L-1`` of a grid, delay-major per Doppler."""
    return np.asarray(Y)[row0 : row0 + L, :].flatten(order="F")


def region_flat_indices(M, N, row0, L):
    """Flat (column-major) grid indices of a delay-row band."""
    rows = row0 + np.arange(L)
    return (np.arange(N)[None, :] * M + rows[:, None]).flatten(order="F")


def layout(scheme, cfg):
    """Build the cell partition for a scheme at the given configuration."""
    scheme = Scheme.parse(scheme) if isinstance(scheme, str) else scheme
    M, N, L, m_p, n_p = cfg.M, cfg.N, cfg.L, cfg.m_p, cfg.n_p
    guard = np.zeros((M, N), dtype=bool)
    if m_p - L + 1 < 0:
        raise ValueError("pilot region exceeds the frame (delay wraparound)")

    if scheme in (Scheme.FULL_GUARD, Scheme.REDUCED_GUARD):
        k = 0 if scheme is Scheme.FULL_GUARD else cfg.k
        lo = m_p - L + 1 + k
        hi = m_p + L - 1
        if hi > M - 1:
            raise ValueError("pilot region exceeds the frame in delay")
        guard[lo : hi + 1, :] = True
        guard[m_p, n_p] = False
        pilot_cells = ((m_p, n_p, complex(np.sqrt(cfg.gamma_p))),)
        data = ~guard
        data[m_p, n_p] = False
    elif scheme is Scheme.SPLIT_PILOT:
        k = cfg.k
        hi = m_p + 2 * L - 1
        if hi > M - 1:
            raise ValueError("pilot region exceeds the frame in delay")
        guard[m_p : m_p + L, :] = True
        guard[m_p, n_p] = False
        amp = complex(np.sqrt(cfg.gamma_p / 2.0))
        pilot_cells = ((m_p, n_p, amp), (m_p + L, n_p, amp))
        data = ~guard
        data[m_p, n_p] = False
        # (m_p + L, n_p) stays a data cell: the second impulse rides on data.
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    return PilotLayout(
        scheme=scheme,
        M=M,
        N=N,
        m_p=m_p,
        n_p=n_p,
        L=L,
        k=k,
        pilot_cells=pilot_cells,
        guard_mask=guard,
        data_mask=data,
    )


def overhead(scheme, L, N, k=None):
    """Pilot overhead in DD cells for a scheme."""
    scheme = Scheme.parse(scheme) if isinstance(scheme, str) else scheme
    if scheme is Scheme.FULL_GUARD:
        return (2 * L - 1) * N
    if scheme is Scheme.REDUCED_GUARD:
        k = L - 1 if k is None else k
        if not 0 <= k <= L - 1:
            raise ValueError(f"reclaimed rows k={k} must lie in [0, L-1]")
        return (2 * L - 1 - k) * N
    if scheme is Scheme.SPLIT_PILOT:
        return L * N
    raise ValueError(f"unknown scheme {scheme!r}")


def multiplex(D, P, lay):
    """Superpose data and pilot grids, enforcing the layout partition."""
    D = np.asarray(D)
    P = np.asarray(P)
    if D.shape != (lay.M, lay.N) or P.shape != (lay.M, lay.N):
        raise ValueError("grid shape does not match the layout")
    if np.any(D[lay.guard_mask] != 0):
        raise ValueError("data symbols on guard cells violate the layout")
    pure_pilot = lay.pilot_mask & ~lay.data_mask
    if np.any(D[pure_pilot] != 0):
        raise ValueError("data symbols on pilot-only cells violate the layout")
    if np.any(P[~lay.pilot_mask] != 0):
        raise ValueError("pilot grid has energy outside its declared cells")
    return D + P
