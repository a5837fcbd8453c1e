"""Command-line front end: Monte-Carlo sweeps and numeric self-tests.

``otfssim sweep`` resolves a configuration from a profile, an optional flat
key-value config file (INI sections ``[frame]``, ``[sweep]``, ``[detector]``)
and command-line flags (highest precedence), runs the sweep and writes a CSV,
gnuplot-ready ``.dat`` files and a JSON manifest describing the run.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 self-test
failure.
"""

import argparse
import configparser
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import __version__
from .channel import eva_channel_length
from .detection import DetectorConfig
from .frame import FrameConfig, Scheme
from .pilots import overhead
from .selftest import check_names, run_selftest
from .simulate import SweepSpec, aggregate_traces, run_sweep

ALL_SCHEMES = (Scheme.FULL_GUARD, Scheme.REDUCED_GUARD, Scheme.SPLIT_PILOT)


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Benchmark setups: the first four reproduce the published operating points,
# "custom" starts from the same base and expects overrides.
PROFILES = {
    "fig2": dict(Ts=520.3e-9, snrs=(6, 8, 10, 12, 14, 16, 18), frames=200,
                 n_max_split=2, n_max_reduced=4, schemes=ALL_SCHEMES,
                 traces=False),
    "fig3": dict(Ts=520.3e-9, snrs=(6, 8, 10, 12, 14, 16, 18), frames=200,
                 n_max_split=2, n_max_reduced=4, schemes=ALL_SCHEMES,
                 traces=False),
    "fig4": dict(Ts=133.33e-9, snrs=(6, 8, 10, 12, 14, 16, 18), frames=100,
                 n_max_split=2, n_max_reduced=4, schemes=ALL_SCHEMES,
                 traces=False),
    "fig5": dict(Ts=520.3e-9, snrs=(14,), frames=200,
                 n_max_split=4, n_max_reduced=4,
                 schemes=(Scheme.SPLIT_PILOT, Scheme.REDUCED_GUARD),
                 traces=True),
    "custom": dict(Ts=520.3e-9, snrs=(14,), frames=50,
                   n_max_split=2, n_max_reduced=4, schemes=ALL_SCHEMES,
                   traces=False),
}

_FRAME_KEYS = {
    "m": int, "n": int, "ts": float, "mcp": int, "fc": float,
    "delta_f": float, "q": int, "gamma_p_db": float, "m_p": int,
    "n_p": int, "k": int,
}
_SWEEP_KEYS = {
    "schemes": str, "snrs_db": str, "frames": int, "seed": int,
    "speed_kmh": float, "n_max_split": int, "n_max_reduced": int,
}
_DETECTOR_KEYS = {
    "max_lsmr_iters": int, "residual_tol": float, "ic_rounds": int,
    "damping": float,
}


def _parse_config_file(path):
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    out = {}
    schema = {"frame": _FRAME_KEYS, "sweep": _SWEEP_KEYS, "detector": _DETECTOR_KEYS}
    for section in parser.sections():
        if section not in schema:
            raise ConfigError(f"{path}: unknown section [{section}]")
        keys = schema[section]
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            try:
                out[(section, key)] = keys[key](raw)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: bad value for {key!r} in [{section}]: {raw!r} ({exc})"
                ) from exc
    return out


def _parse_snrs(text):
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad SNR list {text!r}: {exc}") from exc


def _parse_schemes(text):
    if str(text).strip().lower() == "all":
        return ALL_SCHEMES
    try:
        return tuple(Scheme.parse(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_config(args):
    """Merge profile, config file and flags into a SweepSpec (flags win)."""
    profile = PROFILES[args.profile]
    file_cfg = _parse_config_file(args.config) if args.config else {}

    def pick(section, key, default):
        return file_cfg.get((section, key), default)

    frame_kwargs = dict(
        M=pick("frame", "m", 128),
        N=pick("frame", "n", 32),
        Ts=pick("frame", "ts", profile["Ts"]),
        fc=pick("frame", "fc", 5.9e9),
        delta_f=pick("frame", "delta_f", 15e3),
        Q=pick("frame", "q", 4),
        gamma_p=10.0 ** (pick("frame", "gamma_p_db", 40.0) / 10.0),
        n_p=pick("frame", "n_p", 0),
    )
    frame_kwargs["L"] = eva_channel_length(frame_kwargs["Ts"])
    for src, dst in (("mcp", "Mcp"), ("m_p", "m_p"), ("k", "k")):
        if ("frame", src) in file_cfg:
            frame_kwargs[dst] = file_cfg[("frame", src)]

    schemes = profile["schemes"]
    if ("sweep", "schemes") in file_cfg:
        schemes = _parse_schemes(file_cfg[("sweep", "schemes")])
    if args.scheme:
        schemes = _parse_schemes(args.scheme)

    snrs = profile["snrs"]
    if ("sweep", "snrs_db") in file_cfg:
        snrs = _parse_snrs(file_cfg[("sweep", "snrs_db")])
    if args.snr:
        snrs = _parse_snrs(args.snr)

    frames = args.frames if args.frames is not None else pick("sweep", "frames", profile["frames"])
    seed = args.seed if args.seed is not None else pick("sweep", "seed", 1)
    n_max_split = pick("sweep", "n_max_split", profile["n_max_split"])
    n_max_reduced = pick("sweep", "n_max_reduced", profile["n_max_reduced"])
    if args.iters is not None:
        n_max_split = n_max_reduced = args.iters

    det_kwargs = {k: pick("detector", k, None) for k in _DETECTOR_KEYS}
    det_kwargs = {k: v for k, v in det_kwargs.items() if v is not None}

    try:
        frame_cfg = FrameConfig(**frame_kwargs)
        detector = DetectorConfig(**det_kwargs)
        spec = SweepSpec(
            schemes=schemes,
            snrs_db=snrs,
            frames=int(frames),
            base_seed=int(seed),
            frame=frame_cfg,
            detector=detector,
            speed_kmh=pick("sweep", "speed_kmh", 500.0),
            n_max_by_scheme={
                Scheme.SPLIT_PILOT: int(n_max_split),
                Scheme.REDUCED_GUARD: int(n_max_reduced),
                Scheme.FULL_GUARD: 0,
            },
            collect_traces=profile["traces"] or args.profile == "fig5",
            early_stop=not profile["traces"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def _write_dat(path, header, rows):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def _emit_outputs(args, spec, result, out_dir):
    outputs = []
    csv_path = out_dir / "results.csv"
    outputs.append(csv_path.name)

    stem = args.profile
    for metric in ("ber", "nmse_db"):
        rows = []
        for snr in spec.snrs_db:
            row = [snr]
            for scheme in spec.schemes:
                row.append(getattr(result.point(scheme, snr), metric))
            rows.append(row)
        name = f"{stem}_{'nmse' if metric == 'nmse_db' else metric}.dat"
        header = "snr_db " + " ".join(s.value for s in spec.schemes)
        _write_dat(out_dir / name, header, rows)
        outputs.append(name)

    if result.traces:
        agg = aggregate_traces(result.traces)
        trace_rows = []
        for (scheme, snr), stats in sorted(
            agg.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
        ):
            for i, (nm, b) in enumerate(zip(stats["nmse"], stats["ber"])):
                trace_rows.append((scheme, snr, i, nm, b, stats["mean_stop"]))
        name = f"{stem}_trace.csv"
        with open(out_dir / name, "w", encoding="ascii") as fh:
            fh.write("scheme,snr_db,iteration,nmse,ber,mean_stop_iteration\n")
            for scheme, snr, i, nm, b, stop in trace_rows:
                fh.write(f"{scheme.value},{snr:.10g},{i},{nm:.10g},{b:.10g},{stop:.10g}\n")
        outputs.append(name)
        name = f"{stem}_trace.dat"
        _write_dat(
            out_dir / name,
            "iteration then per-scheme nmse/ber columns; see trace.csv",
            [
                (snr, i, nm, b)
                for (scheme, snr, i, nm, b, _) in trace_rows
            ],
        )
        outputs.append(name)
    return outputs


def _manifest(args, spec, outputs):
    cfg = spec.frame
    frame_dict = {
        f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)
    }
    frame_dict["scheme"] = cfg.scheme.value
    return {
        "artifact_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "profile": args.profile,
        "frame": frame_dict,
        "sweep": {
            "schemes": [s.value for s in spec.schemes],
            "snrs_db": list(spec.snrs_db),
            "frames": spec.frames,
            "base_seed": spec.base_seed,
            "speed_kmh": spec.speed_kmh,
            "n_max_by_scheme": {s.value: n for s, n in spec.n_max_by_scheme.items()},
            "collect_traces": spec.collect_traces,
        },
        "detector": dataclasses.asdict(spec.detector),
        "pilot_overhead_cells": {
            s.value: overhead(s, cfg.L, cfg.N, cfg.k) for s in ALL_SCHEMES
        },
        "outputs": outputs,
    }


def cmd_sweep(args):
    try:
        spec = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec.out_csv = str(out_dir / "results.csv")

    result = run_sweep(spec)
    outputs = _emit_outputs(args, spec, result, out_dir)

    manifest = _manifest(args, spec, outputs + ["manifest.json"])
    with open(out_dir / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for p in result.points:
        print(
            f"{p.scheme.value:14s} snr={p.snr_db:5.1f} dB  ber={p.ber:.4e}  "
            f"nmse={p.nmse_db:7.2f} dB  iters={p.mean_iters:.2f}  frames={p.frames}"
        )
    if result.failures:
        print(f"warning: {result.failures} frame(s) failed; see log", file=sys.stderr)
    print(f"wrote {len(outputs) + 1} file(s) to {out_dir} in {result.wall_time:.1f} s")
    return 0


def cmd_selftest(args):
    if args.list:
        for name in check_names():
            print(name)
        return 0
    results = run_selftest()
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if failed:
        print(f"self-test failed: {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


def _build_parser():
    parser = _Parser(prog="otfssim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo BER/NMSE sweep")
    sweep.add_argument("--config", help="flat key-value config file (INI)")
    sweep.add_argument("--scheme", help="scheme name or 'all'")
    sweep.add_argument("--snr", help="comma-separated SNR list in dB")
    sweep.add_argument("--frames", type=int, help="frames per sweep point")
    sweep.add_argument("--seed", type=int, help="base seed")
    sweep.add_argument("--out", default="out", help="output directory")
    sweep.add_argument("--iters", type=int, help="refinement iteration cap for all schemes")
    sweep.add_argument(
        "--profile", choices=sorted(PROFILES), default="custom",
        help="preset operating point",
    )

    selftest = sub.add_parser("selftest", help="run the algebraic identity suite")
    selftest.add_argument("--list", action="store_true", help="list identity names and exit")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if args.command == "sweep":
        return cmd_sweep(args)
    return cmd_selftest(args)


if __name__ == "__main__":
    sys.exit(main())
