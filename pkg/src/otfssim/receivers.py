"""Receiver chains for the three pilot schemes.

Each receiver takes the received DD grid and returns the final effective
channel estimate (as an operator), the detected data grid and an iteration
trace.  The split-pilot receiver runs the two-stage joint estimation and
detection loop: initial average estimate, pilot cancellation by region
differencing, detection, then refinement iterations that cancel detected
data from the pilot regions and cross-remove the impulses with interpolated
estimates.  Iterations stop early once the hard symbols feeding the
refinement stop changing.
"""

from dataclasses import dataclass, field

import numpy as np

from . import estimation
from .detection import (
    RegionDifference,
    TransformedOperator,
    detect_with_ic,
    symbols_changed,
)
from .estimation import ChannelInterpolator, build_sbc
from .frame import Scheme, qam_demodulate_hard, vec
from .metrics import ber as ber_metric
from .metrics import nmse as nmse_metric
from .pilots import layout, region_flat_indices, region_vec


@dataclass
class IterationRecord:
    n: int
    nmse: float | None = None
    ber: float | None = None
    stop_reason: str | None = None


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    stopped_at: int = 0

    def add(self, n, nmse=None, ber=None, stop_reason=None):
        self.records.append(IterationRecord(n, nmse, ber, stop_reason))

    @property
    def stop_reason(self):
        return self.records[-1].stop_reason if self.records else None


@dataclass
class FrameTruth:
    """Ground truth attached for instrumentation (trace metrics only)."""

    channel_op: object
    data: np.ndarray
    nmse_probes: int = 64


@dataclass
class ReceiverOutput:
    h_eff: object
    d_hat: np.ndarray
    d_soft: np.ndarray
    h_vec: np.ndarray
    trace: IterationTrace


def _check_layout(cfg, expected):
    if cfg.scheme is not expected:
        raise ValueError(f"configuration is for {cfg.scheme.value}, receiver expects {expected.value}")
    if cfg.n_p != 0:
        raise ValueError("estimators support pilots at Doppler bin 0 only")


def _default_detector(cfg):
    def detector(op, y, lay, det_cfg):
        return detect_with_ic(op, y, lay, det_cfg, cfg.Q)

    return detector


def _trace_metrics(truth, cfg, lay, est_op, det):
    if truth is None:
        return None, None
    n = nmse_metric(truth.channel_op, est_op, n_probes=truth.nmse_probes)
    mask = lay.data_mask
    tx_bits = qam_demodulate_hard(truth.data[mask], cfg.Q)
    rx_bits = qam_demodulate_hard(det.hard[mask], cfg.Q)
    return n, ber_metric(tx_bits, rx_bits)


def run_full_guard(Y, cfg, det_cfg, detector=None, truth=None):
    """Single-shot estimate, interpolate, subtract the pilot, detect."""
    _check_layout(cfg, Scheme.FULL_GUARD)
    lay = layout(cfg.scheme, cfg)
    detector = detector or _default_detector(cfg)
    Y = np.asarray(Y, dtype=np.complex128)

    y_p = region_vec(Y, lay.p1_row, cfg.L)
    h_hat = estimation.estimate_full_guard(y_p, cfg.gamma_p)
    interp = ChannelInterpolator(h_hat, lay.p1_row, cfg)
    est_op = interp.operator()

    residual = estimation.remove_pilot_reduced(y_p, h_hat, cfg.gamma_p)
    Yc = Y.copy()
    Yc[lay.p1_row : lay.p1_row + cfg.L, :] = residual.reshape((cfg.L, cfg.N), order="F")
    det = detector(est_op, vec(Yc), lay, det_cfg)

    trace = IterationTrace(stopped_at=0)
    n, b = _trace_metrics(truth, cfg, lay, est_op, det)
    trace.add(0, n, b, stop_reason="single-shot")
    return ReceiverOutput(est_op, det.hard, det.soft, h_hat, trace)


def run_reduced_guard(Y, cfg, det_cfg, detector=None, truth=None):
    """Initial contaminated estimate, then fixed-count refinement iterations.

    Every iteration cancels the previously detected data from the pilot
    region, re-estimates, replaces the region by the pilot-free residual and
    detects again.
    """
    _check_layout(cfg, Scheme.REDUCED_GUARD)
    lay = layout(cfg.scheme, cfg)
    detector = detector or _default_detector(cfg)
    Y = np.asarray(Y, dtype=np.complex128)
    L, N = cfg.L, cfg.N
    lo, hi = lay.interference_rows(1)

    y_p = region_vec(Y, lay.p1_row, L)
    h_hat = estimation.estimate_reduced_guard(y_p, cfg.gamma_p)

    trace = IterationTrace()

    def clean_and_detect(h_cur):
        interp = ChannelInterpolator(h_cur, lay.p1_row, cfg)
        op = interp.operator()
        residual = estimation.remove_pilot_reduced(y_p, h_cur, cfg.gamma_p)
        Yc = Y.copy()
        Yc[lay.p1_row : lay.p1_row + L, :] = residual.reshape((L, N), order="F")
        return op, detector(op, vec(Yc), lay, det_cfg)

    est_op, det = clean_and_detect(h_hat)
    n, b = _trace_metrics(truth, cfg, lay, est_op, det)
    trace.add(0, n, b)

    for it in range(1, cfg.n_max + 1):
        sd_prev = build_sbc(det.hard[lo:hi, :])
        h_hat = estimation.refine_reduced_guard(y_p, sd_prev, h_hat, cfg.gamma_p)
        est_op, det = clean_and_detect(h_hat)
        n, b = _trace_metrics(truth, cfg, lay, est_op, det)
        trace.add(it, n, b, stop_reason="n-max-reached" if it == cfg.n_max else None)

    trace.stopped_at = cfg.n_max
    return ReceiverOutput(est_op, det.hard, det.soft, h_hat, trace)


def run_split_pilot(
    Y,
    cfg,
    det_cfg,
    detector=None,
    truth=None,
    stage1_regions="both",
    prior_mode="averaged",
    early_stop=True,
):
    """Two-stage split-pilot joint channel estimation and detection.

    ``stage1_regions`` places the initial differenced residual in both pilot
    regions (default) or only the second.  ``prior_mode`` selects which
    previous estimate multiplies the detected-data operators during
    refinement: the averaged one (default) or the per-impulse ones.  With
    ``early_stop`` off, all ``n_max`` iterations run and the iteration where
    the stop rule first fired is still recorded.
    """
    _check_layout(cfg, Scheme.SPLIT_PILOT)
    if prior_mode not in ("averaged", "per_pilot"):
        raise ValueError(f"unknown prior mode {prior_mode!r}")
    lay = layout(cfg.scheme, cfg)
    detector = detector or _default_detector(cfg)
    Y = np.asarray(Y, dtype=np.complex128)
    L, M, N = cfg.L, cfg.M, cfg.N

    y_p1 = region_vec(Y, lay.p1_row, L)
    y_p2 = region_vec(Y, lay.p2_row, L)
    lo1, hi1 = lay.interference_rows(1)
    lo2, hi2 = lay.interference_rows(2)
    support = lay.data_support_mask()
    stopped_at = None

    # Stage 1: averaged estimate and pilot cancellation by differencing.
    h1, h2, h_avg = estimation.estimate_split_initial(y_p1, y_p2, cfg.gamma_p)
    interp_avg = ChannelInterpolator(h_avg, lay.p1_row, cfg)
    est_op = interp_avg.operator()

    differ = RegionDifference(
        region_flat_indices(M, N, lay.p1_row, L),
        region_flat_indices(M, N, lay.p2_row, L),
        mode=stage1_regions,
    )
    det = detector(TransformedOperator(est_op, differ), differ.apply(vec(Y)), lay, det_cfg)

    trace = IterationTrace()
    nm, b = _trace_metrics(truth, cfg, lay, est_op, det)
    trace.add(0, nm, b)

    for it in range(1, cfg.n_max + 1):
        sd1 = build_sbc(det.hard[lo1:hi1, :])
        sd2 = build_sbc(det.hard[lo2:hi2, :])
        if prior_mode == "averaged":
            prior1 = prior2 = h_avg
        else:
            prior1, prior2 = h1, h2
        h1, h2 = estimation.refine_split(
            y_p1, y_p2, sd1, sd2, cfg.gamma_p, prior1, prior2
        )
        h_avg = 0.5 * (h1 + h2)

        interp1 = ChannelInterpolator(h1, lay.p1_row, cfg)
        interp2 = ChannelInterpolator(h2, lay.p2_row, cfg)
        interp_avg = ChannelInterpolator(h_avg, lay.p1_row, cfg)
        est_op = interp_avg.operator()

        Yc = estimation.remove_pilots_cross(Y, interp1, interp2, cfg.gamma_p, lay)
        det_prev = det
        det = detector(est_op, vec(Yc), lay, det_cfg)

        stable = not symbols_changed(det.hard, det_prev.hard, support)
        reason = None
        if stable and stopped_at is None:
            stopped_at = it
            reason = "symbols-stable"
        elif it == cfg.n_max and stopped_at is None:
            reason = "n-max-reached"
        nm, b = _trace_metrics(truth, cfg, lay, est_op, det)
        trace.add(it, nm, b, stop_reason=reason)
        if early_stop and stable:
            break

    trace.stopped_at = stopped_at if stopped_at is not None else cfg.n_max
    return ReceiverOutput(est_op, det.hard, det.soft, h_avg, trace)
