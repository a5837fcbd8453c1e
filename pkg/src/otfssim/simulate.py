"""Monte-Carlo sweep runner: seeded frame simulation, aggregation, CSV output.

Per-frame seeds are derived by counter-based splitting of the base seed with
the scheme, SNR and frame index, so results do not depend on execution order
and sweeps are reproducible bit for bit.  Frames of one sweep point can run
in parallel worker processes; ``OTFS_SIM_THREADS`` caps the worker count.
"""

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import DDChannelOperator, apply_ltv, sample_eva_channel
from .detection import DetectorConfig
from .frame import (
    FrameConfig,
    Scheme,
    add_cp,
    dd_to_delay_time,
    delay_time_to_dd,
    qam_demodulate_hard,
    qam_modulate,
    remove_cp,
)
from .metrics import nmse
from .pilots import layout, multiplex
from .receivers import FrameTruth, run_full_guard, run_reduced_guard, run_split_pilot

logger = logging.getLogger(__name__)

_SCHEME_TAG = {
    Scheme.FULL_GUARD: 0,
    Scheme.REDUCED_GUARD: 1,
    Scheme.SPLIT_PILOT: 2,
}

CSV_HEADER = "scheme,snr_db,ber,nmse,nmse_db,mean_iters,frames,seed"


@dataclass
class SweepSpec:
    schemes: tuple
    snrs_db: tuple
    frames: int
    base_seed: int
    frame: FrameConfig
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    out_csv: str | None = None
    speed_kmh: float = 500.0
    n_max_by_scheme: dict | None = None
    collect_traces: bool = False
    early_stop: bool = True
    nmse_probes: int = 64

    def __post_init__(self):
        self.schemes = tuple(
            Scheme.parse(s) if isinstance(s, str) else s for s in self.schemes
        )
        self.snrs_db = tuple(float(s) for s in self.snrs_db)
        if self.frames < 1:
            raise ValueError("at least one frame per sweep point is required")
        if not self.snrs_db:
            raise ValueError("SNR list must not be empty")

    def config_for(self, scheme):
        cfg = dataclasses.replace(self.frame, scheme=scheme)
        if self.n_max_by_scheme and scheme in self.n_max_by_scheme:
            cfg = dataclasses.replace(cfg, n_max=self.n_max_by_scheme[scheme])
        return cfg


@dataclass
class FrameStats:
    bit_errors: int
    bit_count: int
    nmse: float
    iterations: int
    trace: list | None = None


@dataclass
class SweepPoint:
    scheme: Scheme
    snr_db: float
    ber: float
    nmse: float
    nmse_db: float
    mean_iters: float
    frames: int
    seed: int


@dataclass
class SweepResult:
    points: list
    wall_time: float
    failures: int
    traces: dict = field(default_factory=dict)

    def point(self, scheme, snr_db):
        for p in self.points:
            if p.scheme is scheme and p.snr_db == snr_db:
                return p
        raise KeyError((scheme, snr_db))


def frame_seed(base_seed, scheme, snr_db, index):
    """Order-independent seed for one simulated frame."""
    return np.random.SeedSequence(
        [int(base_seed), _SCHEME_TAG[scheme], int(round(snr_db * 1000)), int(index)]
    )


def simulate_frame(cfg, det_cfg, snr_db, seed, speed_kmh=500.0, collect_trace=False,
                   early_stop=True, nmse_probes=64):
    """Simulate one frame end to end and run the scheme's receiver.

    Draws the channel, data bits and noise from the seed, transmits the
    multiplexed frame through the time-varying channel at the requested data
    SNR, and returns bit errors, final-channel NMSE and iteration count.
    """
    rng = np.random.default_rng(seed)
    chan = sample_eva_channel(rng, speed_kmh, cfg.fc, cfg.Ts)
    if chan.L != cfg.L:
        raise ValueError(
            f"configured channel length L={cfg.L} does not match the model's L={chan.L}"
        )
    lay = layout(cfg.scheme, cfg)
    data_idx = np.flatnonzero(lay.data_mask.flatten(order="F"))

    bits = rng.integers(0, 2, data_idx.size * cfg.bits_per_symbol, dtype=np.int8)
    D = np.zeros(cfg.MN, dtype=np.complex128)
    D[data_idx] = qam_modulate(bits, cfg.Q)
    D = D.reshape((cfg.M, cfg.N), order="F")
    X = multiplex(D, lay.pilot_grid(), lay)

    s = add_cp(dd_to_delay_time(X), cfg.Mcp)
    r = apply_ltv(s, chan, cfg.Ts)
    sigma = np.sqrt(10.0 ** (-snr_db / 10.0))
    noise = sigma / np.sqrt(2.0) * (
        rng.standard_normal(cfg.M_T) + 1j * rng.standard_normal(cfg.M_T)
    )
    Y = delay_time_to_dd(remove_cp(r + noise, cfg.Mcp), cfg.M, cfg.N)

    true_op = DDChannelOperator.from_realization(chan, cfg)
    truth = (
        FrameTruth(true_op, D, nmse_probes=nmse_probes) if collect_trace else None
    )
    det_cfg = det_cfg.resolved(noise_std=sigma)

    if cfg.scheme is Scheme.FULL_GUARD:
        out = run_full_guard(Y, cfg, det_cfg, truth=truth)
    elif cfg.scheme is Scheme.REDUCED_GUARD:
        out = run_reduced_guard(Y, cfg, det_cfg, truth=truth)
    else:
        out = run_split_pilot(Y, cfg, det_cfg, truth=truth, early_stop=early_stop)

    rx_bits = qam_demodulate_hard(out.d_hat.flatten(order="F")[data_idx], cfg.Q)
    errors = int(np.count_nonzero(rx_bits != bits))
    final_nmse = nmse(true_op, out.h_eff, n_probes=nmse_probes)
    trace = out.trace.records if collect_trace else None
    return FrameStats(errors, bits.size, final_nmse, out.trace.stopped_at, trace)


def _worker(args):
    spec, scheme, snr_db, index = args
    cfg = spec.config_for(scheme)
    seed = frame_seed(spec.base_seed, scheme, snr_db, index)
    try:
        stats = simulate_frame(
            cfg,
            spec.detector,
            snr_db,
            seed,
            speed_kmh=spec.speed_kmh,
            collect_trace=spec.collect_traces,
            early_stop=spec.early_stop,
            nmse_probes=spec.nmse_probes,
        )
        return index, stats, None
    except Exception as exc:  # surfaced by the aggregator, never dropped
        return index, None, f"{type(exc).__name__}: {exc}"


def _worker_count():
    env = os.environ.get("OTFS_SIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(spec):
    """Run the full (scheme x SNR x frame) grid and aggregate BER/NMSE.

    Writes the CSV if ``spec.out_csv`` is set.  Identical specs (including
    the base seed) produce bit-identical CSVs.
    """
    start = time.perf_counter()
    workers = _worker_count()
    points = []
    traces = {}
    failures = 0

    for scheme in spec.schemes:
        for snr_db in spec.snrs_db:
            tasks = [(spec, scheme, snr_db, i) for i in range(spec.frames)]
            if workers > 1 and spec.frames > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_worker, tasks, chunksize=1))
            else:
                results = [_worker(t) for t in tasks]
            results.sort(key=lambda r: r[0])

            errors = bits = 0
            nmses = []
            iters = []
            point_traces = []
            for index, stats, err in results:
                if err is not None:
                    failures += 1
                    logger.error(
                        "frame %d failed (%s, %.1f dB): %s", index, scheme.value, snr_db, err
                    )
                    continue
                errors += stats.bit_errors
                bits += stats.bit_count
                nmses.append(stats.nmse)
                iters.append(stats.iterations)
                if stats.trace is not None:
                    point_traces.append(stats.trace)

            mean_nmse = float(np.mean(nmses)) if nmses else float("nan")
            points.append(
                SweepPoint(
                    scheme=scheme,
                    snr_db=snr_db,
                    ber=errors / bits if bits else float("nan"),
                    nmse=mean_nmse,
                    nmse_db=10.0 * np.log10(mean_nmse) if mean_nmse > 0 else float("nan"),
                    mean_iters=float(np.mean(iters)) if iters else float("nan"),
                    frames=len(nmses),
                    seed=spec.base_seed,
                )
            )
            if point_traces:
                traces[(scheme, snr_db)] = point_traces

    result = SweepResult(points, time.perf_counter() - start, failures, traces)
    if spec.out_csv:
        write_csv(result.points, spec.out_csv)
    return result


def aggregate_traces(traces):
    """Average per-iteration NMSE/BER over frames for each sweep point.

    Frames that stopped early sit at a fixed point, so their last record is
    held for the remaining iterations before averaging.
    """
    out = {}
    for key, frame_traces in traces.items():
        depth = max(len(records) for records in frame_traces)
        nm = np.empty((len(frame_traces), depth))
        bb = np.empty((len(frame_traces), depth))
        stops = []
        for i, records in enumerate(frame_traces):
            stop = None
            for rec in records:
                if rec.stop_reason == "symbols-stable" and stop is None:
                    stop = rec.n
            stops.append(stop if stop is not None else records[-1].n)
            for j in range(depth):
                rec = records[min(j, len(records) - 1)]
                nm[i, j] = rec.nmse if rec.nmse is not None else np.nan
                bb[i, j] = rec.ber if rec.ber is not None else np.nan
        out[key] = {
            "nmse": nm.mean(axis=0),
            "ber": bb.mean(axis=0),
            "mean_stop": float(np.mean(stops)),
        }
    return out


def format_csv(points):
    lines = [CSV_HEADER]
    for p in points:
        lines.append(
            f"{p.scheme.value},{p.snr_db:.10g},{p.ber:.10g},{p.nmse:.10g},"
            f"{p.nmse_db:.10g},{p.mean_iters:.10g},{p.frames},{p.seed}"
        )
    return "\n".join(lines) + "\n"


def write_csv(points, path):
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(format_csv(points))
    except OSError as exc:
        raise OSError(f"could not write sweep results to {path}: {exc}") from exc
