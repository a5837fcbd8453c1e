"""Least-squares symbol detection on the delay-Doppler grid.

The detector solves ``min ||A d - y||`` with a Golub-Kahan based LSMR
iteration that only needs forward/adjoint applications of the channel
operator.  Guard and pilot-only cells are excluded by masking the operator's
columns, so the solution lives on the data cells; interference-cancellation
passes then re-solve the least reliable symbols against the residual after
subtracting the confidently decided ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .frame import min_distance, nearest_symbols, unvec


@dataclass
class DetectorConfig:
    """Knobs of the least-squares detector.

    ``damping=None`` resolves to the measurement noise standard deviation at
    the operating SNR (a ridge at the noise level), which keeps the solve
    from amplifying noise in channel nulls; set an explicit value (including
    0 for the plain least-squares solution) to override.
    """

    max_lsmr_iters: int = 200
    residual_tol: float = 1e-6
    ic_rounds: int = 2
    damping: float | None = None

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual tolerance must be positive")
        if self.ic_rounds < 0:
            raise ValueError("interference-cancellation rounds must be non-negative")
        if self.damping is not None and self.damping < 0:
            raise ValueError("damping must be non-negative")

    def resolved(self, noise_std=0.0):
        """A copy with ``damping=None`` replaced by the given noise level."""
        if self.damping is not None:
            return self
        from dataclasses import replace

        return replace(self, damping=float(noise_std))


@dataclass
class DetectionResult:
    soft: np.ndarray
    hard: np.ndarray
    lsmr_iterations: int
    residual_norm: float


@dataclass
class LsmrInfo:
    iterations: int
    istop: int
    residual_norm: float
    normal_residual_norm: float
    residual_history: list = field(default_factory=list)


class MaskedColumns:
    """Restrict an operator to a column subset by zeroing masked-out inputs."""

    def __init__(self, op, mask_flat):
        self.op = op
        self.mask = np.asarray(mask_flat, dtype=bool)
        if self.mask.size != op.shape[1]:
            raise ValueError("mask length does not match the operator")
        self.shape = op.shape

    def forward(self, x):
        xm = np.asarray(x, dtype=np.complex128).copy()
        xm[~self.mask] = 0
        return self.op.forward(xm)

    def adjoint(self, y):
        g = self.op.adjoint(y)
        g[~self.mask] = 0
        return g


class RegionDifference:
    """Row transform replacing pilot regions by their difference.

    ``apply`` maps a received vector so the second region minus the first
    lands in the transformed pilot rows (mode ``both`` writes it into both
    regions, ``p2_only`` zeroes the first); everything else passes through.
    Composing it with the channel model absorbs the sign flip that the
    difference puts on the first region's data.
    """

    def __init__(self, idx1, idx2, mode="both"):
        if mode not in ("both", "p2_only"):
            raise ValueError(f"unknown region mode {mode!r}")
        self.idx1 = np.asarray(idx1)
        self.idx2 = np.asarray(idx2)
        if self.idx1.size != self.idx2.size:
            raise ValueError("pilot regions must have matching sizes")
        self.mode = mode

    def apply(self, y):
        out = np.asarray(y, dtype=np.complex128).copy()
        diff = out[self.idx2] - out[self.idx1]
        out[self.idx2] = diff
        out[self.idx1] = diff if self.mode == "both" else 0.0
        return out

    def adjoint_apply(self, z):
        out = np.asarray(z, dtype=np.complex128).copy()
        z1 = out[self.idx1]
        z2 = out[self.idx2]
        if self.mode == "both":
            out[self.idx1] = -(z1 + z2)
            out[self.idx2] = z1 + z2
        else:
            out[self.idx1] = -z2
            out[self.idx2] = z2
        return out


class TransformedOperator:
    """Channel operator with a row transform applied to its output."""

    def __init__(self, op, row_transform):
        self.op = op
        self.transform = row_transform
        self.shape = op.shape

    def forward(self, x):
        return self.transform.apply(self.op.forward(x))

    def adjoint(self, y):
        return self.op.adjoint(self.transform.adjoint_apply(y))


def _sym_ortho(a, b):
    """Stable Givens rotation (c, s, r) with r = hypot(a, b)."""
    if b == 0:
        return np.sign(a) if a != 0 else 1.0, 0.0, abs(a)
    if a == 0:
        return 0.0, np.sign(b), abs(b)
    if abs(b) > abs(a):
        tau = a / b
        s = np.sign(b) / np.sqrt(1 + tau * tau)
        c = s * tau
        r = b / s
    else:
        tau = b / a
        c = np.sign(a) / np.sqrt(1 + tau * tau)
        s = c * tau
        r = a / c
    return c, s, r


def lsmr(A, b, damp=0.0, atol=1e-6, btol=1e-6, conlim=1e8, maxiter=None,
         track_residuals=False):
    """Iterative least-squares solve of ``min ||A x - b||`` (damped optional).

    Works on complex operators exposing ``forward``/``adjoint``.  Returns the
    solution and an :class:`LsmrInfo` whose ``residual_history`` holds the
    ``||r||`` estimate after every iteration (recomputed exactly when
    ``track_residuals`` is set).
    """
    b = np.asarray(b, dtype=np.complex128)
    m = b.shape[0]
    n = A.shape[1]
    if maxiter is None:
        maxiter = min(m, n)
    eps = np.finfo(float).eps

    u = b.copy()
    normb = np.linalg.norm(b)
    x = np.zeros(n, dtype=np.complex128)
    beta = normb
    if beta > 0:
        u /= beta
        v = A.adjoint(u)
        alpha = np.linalg.norm(v)
    else:
        v = np.zeros(n, dtype=np.complex128)
        alpha = 0.0
    if alpha > 0:
        v /= alpha

    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(n, dtype=np.complex128)

    # State for the ||r|| recurrence.
    betadd = beta
    betad = 0.0
    rhodold = 1.0
    tautildeold = thetatilde = zeta = d = 0.0

    normA2 = alpha * alpha
    maxrbar = 0.0
    minrbar = 1e100
    normr = beta
    normar = alpha * beta
    ctol = 1.0 / conlim if conlim > 0 else 0.0
    history = [float(normr)]
    istop = 0
    itn = 0

    if normb == 0:
        return x, LsmrInfo(0, 1, 0.0, 0.0, history)
    if normar == 0:
        return x, LsmrInfo(0, 1, float(normr), 0.0, history)

    while itn < maxiter:
        itn += 1

        u = A.forward(v) - alpha * u
        beta = np.linalg.norm(u)
        if beta > 0:
            u /= beta
            v = A.adjoint(u) - beta * v
            alpha = np.linalg.norm(v)
            if alpha > 0:
                v /= alpha

        chat, shat, alphahat = _sym_ortho(alphabar, damp)

        rhoold = rho
        c, s, rho = _sym_ortho(alphahat, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        rhobarold = rhobar
        zetaold = zeta
        thetabar = sbar * rho
        rhotemp = cbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        x = x + (zeta / (rho * rhobar)) * hbar
        h = v - (thetanew / rho) * h

        betaacute = chat * betadd
        betacheck = -shat * betadd
        betahat = c * betaacute
        betadd = -s * betaacute

        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat

        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        d = d + betacheck * betacheck
        normr = np.sqrt(d + (betad - taud) ** 2 + betadd * betadd)

        normA2 = normA2 + beta * beta
        normA = np.sqrt(normA2)
        normA2 = normA2 + alpha * alpha

        maxrbar = max(maxrbar, rhobarold)
        if itn > 1:
            minrbar = min(minrbar, rhobarold)
        condA = max(maxrbar, rhotemp) / min(minrbar, rhotemp)

        normar = abs(zetabar)
        normx = np.linalg.norm(x)

        if track_residuals:
            history.append(float(np.linalg.norm(b - A.forward(x))))
        else:
            history.append(float(normr))

        test1 = normr / normb
        test2 = normar / (normA * normr + eps)
        test3 = 1.0 / (condA + eps)
        t1 = test1 / (1.0 + normA * normx / normb)
        rtol = btol + atol * normA * normx / normb

        if itn >= maxiter:
            istop = 7
        if 1.0 + test3 <= 1.0:
            istop = 6
        if 1.0 + test2 <= 1.0:
            istop = 5
        if 1.0 + t1 <= 1.0:
            istop = 4
        if test3 <= ctol:
            istop = 3
        if test2 <= atol:
            istop = 2
        if test1 <= rtol:
            istop = 1
        if istop > 0:
            break

    return x, LsmrInfo(itn, istop, float(normr), float(normar), history)


def lsmr_solve(A, y, cfg):
    """LSMR under a :class:`DetectorConfig` (tolerances, caps, damping)."""
    if not np.all(np.isfinite(np.asarray(y))):
        raise ValueError("non-finite measurement vector")
    return lsmr(
        A,
        y,
        damp=cfg.damping if cfg.damping is not None else 0.0,
        atol=cfg.residual_tol,
        btol=cfg.residual_tol,
        maxiter=cfg.max_lsmr_iters,
    )


# Fraction of the minimum constellation distance beyond which a soft symbol
# counts as uncertain in the IC passes.
_UNCERTAIN_FRACTION = 0.4


def detect_with_ic(A, y, lay, cfg, Q):
    """Masked least-squares detection with hard-decision interference cancellation.

    Solves for the data cells, then for ``cfg.ic_rounds`` passes: hard-decide
    everything, rebuild the received contribution, and re-solve only the
    symbols that sit far from their decision, against the residual.
    """
    y = np.asarray(y, dtype=np.complex128)
    data_mask = lay.data_mask.flatten(order="F")
    masked = MaskedColumns(A, data_mask)
    x, info = lsmr_solve(masked, y, cfg)
    total_iters = info.iterations
    resnorm = info.residual_norm
    threshold = _UNCERTAIN_FRACTION * min_distance(Q)

    soft = x
    for _ in range(cfg.ic_rounds):
        hard = np.zeros_like(soft)
        hard[data_mask] = nearest_symbols(soft[data_mask], Q)
        dist = np.abs(soft - hard)
        uncertain = data_mask & (dist > threshold)
        if not uncertain.any():
            break
        residual = y - masked.forward(hard)
        delta, info = lsmr_solve(MaskedColumns(A, uncertain), residual, cfg)
        soft = hard.copy()
        soft[uncertain] += delta[uncertain]
        total_iters += info.iterations
        resnorm = info.residual_norm

    hard = np.zeros_like(soft)
    hard[data_mask] = nearest_symbols(soft[data_mask], Q)
    M, N = lay.M, lay.N
    return DetectionResult(
        soft=unvec(soft, M, N),
        hard=unvec(hard, M, N),
        lsmr_iterations=total_iters,
        residual_norm=resnorm,
    )


def symbols_changed(d_new, d_prev, cells_mask):
    """True iff any hard symbol differs on the given cells."""
    d_new = np.asarray(d_new)
    d_prev = np.asarray(d_prev)
    if d_new.shape != d_prev.shape:
        raise ValueError("grids must have matching shapes")
    return bool(np.any(d_new[cells_mask] != d_prev[cells_mask]))
