"""Command-line entry point: run, trace, medium and validate."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .constants import FREQUENCY_LABELS, R_EARTH_KM
from .frames import Epoch, SmPosition, from_sm_frame

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ALL_FAILED = 3


def _vector(text: str) -> np.ndarray:
    parts = [float(v) for v in text.replace(" ", "").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z in km")
    return np.array(parts)


def _frequency(text: str) -> tuple[str, float]:
    if text in FREQUENCY_LABELS:
        return text, FREQUENCY_LABELS[text]
    try:
        hz = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown frequency {text!r}; use {sorted(FREQUENCY_LABELS)} or Hz") from None
    return f"{hz / 1e6:g}MHz", hz


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lunardelay", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    run = sub.add_parser("run", parents=[common], help="run a full scenario")
    run.add_argument("config", type=Path)
    run.add_argument("--workers", type=int, help="worker processes (default: config)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--outdir", type=Path, help="override the output directory")
    run.add_argument("--max-epochs", type=int, help="only process the first N epochs")

    val = sub.add_parser("validate", parents=[common], help="check a scenario config")
    val.add_argument("config", type=Path)

    tr = sub.add_parser("trace", parents=[common], help="solve and decompose a single link")
    tr.add_argument("--tx", type=_vector, required=True, help="transmitter ECI x,y,z [km]")
    tr.add_argument("--rx", type=_vector, required=True, help="receiver ECI x,y,z [km]")
    tr.add_argument("--freq", type=_frequency, default=("L1", FREQUENCY_LABELS["L1"]))
    tr.add_argument("--kp", type=float, default=3.0)
    tr.add_argument("--r12", type=float, default=167.24)
    tr.add_argument("--epoch", default="2025-01-01T12:00:00")
    tr.add_argument("--medium", choices=("reference", "vacuum", "spherical"), default="reference")

    md = sub.add_parser("medium", parents=[common], help="electron density on an SM-plane grid")
    md.add_argument("--slice", choices=("xy", "xz"), required=True)
    md.add_argument("--kp", type=float, default=3.0)
    md.add_argument("--r12", type=float, default=167.24)
    md.add_argument("--epoch", default="2025-01-01T12:00:00")
    md.add_argument("--extent", type=float, default=8.0, help="half-width in Earth radii")
    md.add_argument("--points", type=int, default=161, help="grid points per axis")
    md.add_argument("--outdir", type=Path, default=Path("."))
    return p


def _log(args):
    return (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))


def cmd_validate(args) -> int:
    from .scenario import ConfigError, load_config
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(f"{args.config}: ok ({len(cfg.epochs)} epochs, {len(cfg.transmitters)} "
              f"transmitters, {len(cfg.receivers)} receivers, "
              f"{len(cfg.kp_values) * len(cfg.r12_values)} weather points, "
              f"{len(cfg.frequencies)} frequencies)")
    return EXIT_OK


def cmd_run(args) -> int:
    from .scenario import ConfigError, config_summary, emit_outputs, load_config, preflight, run_scenario
    log = _log(args)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.outdir is not None:
        over["output_dir"] = args.outdir
    if args.workers is not None:
        if args.workers < 1:
            print("--workers must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        over["workers"] = args.workers
    if args.max_epochs is not None:
        if args.max_epochs < 1:
            print("--max-epochs must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        over["epochs"] = cfg.epochs[:args.max_epochs]
    cfg = cfg.with_overrides(**over)
    try:
        preflight(cfg.output_dir)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_RUNTIME
    try:
        result = run_scenario(cfg, quiet=args.quiet)
        emit_outputs(result, cfg.output_dir, config_summary(cfg), cfg.seed, cfg.bin_edges_km)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    c = result.counts
    log(f"candidates {result.candidates}: emitted {c['emitted']}, occulted {c['occulted']}, "
        f"untrackable {c['untrackable']}, non-converged {c['non_converged']} "
        f"({result.wall_time_s:.1f} s) -> {cfg.output_dir}")
    if c["emitted"] == 0:
        print("no link produced a record; see run_manifest.json for per-link diagnostics",
              file=sys.stderr)
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_trace(args) -> int:
    from .delays import breakdown
    from .link import default_gps_pattern, default_receiver_pattern, compute_cn0, dll_sigma, DllParams
    from .media import SpaceWeather, make_medium
    from .raytrace import OccultationError, solve_initial_direction
    label, hz = args.freq
    medium = make_medium(args.medium)
    weather = SpaceWeather(args.kp, args.r12, Epoch.parse(args.epoch))
    try:
        res = solve_initial_direction(args.tx, args.rx, hz, medium, weather)
    except OccultationError as exc:
        print(f"occulted: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    print(f"link {label} ({hz / 1e6:.2f} MHz), kp={args.kp:g}, r12={args.r12:g}")
    print(f"{'iter':>4} {'miss [m]':>14} {'delay change [m]':>18} {'delay [m]':>14}")
    for k, h in enumerate(res.history, 1):
        print(f"{k:>4} {h.miss_m:>14.4f} {h.delay_change_m:>18.6f} {h.delay_m:>14.6f}")
    print(f"converged: {res.converged} ({res.stop_reason}), miss {res.miss_distance:.4f} m")
    if not res.converged:
        return EXIT_ALL_FAILED
    d = breakdown(res, args.tx, args.rx, medium, weather)
    for name in ("d_i1_los", "d_i2", "d_i3", "d_i1_bend", "d_len", "d_total"):
        print(f"{name:>10} {getattr(d, name):>14.6f} m")
    print(f"{'tec_los':>10} {d.tec_los / 1e16:>14.4f} TECU")
    print(f"{'tec_bend':>10} {d.tec_bend / 1e16:>14.4f} TECU")
    try:
        budget = compute_cn0(args.tx, args.rx, default_gps_pattern(), default_receiver_pattern(),
                             27.0, hz)
        sigma = dll_sigma(budget.c_n0, DllParams.for_frequency(hz))
        print(f"{'c_n0':>10} {budget.c_n0:>14.3f} dB-Hz (trackable: {budget.trackable})")
        print(f"{'dll_sigma':>10} {sigma:>14.4f} m")
    except ValueError:
        pass
    return EXIT_OK


def cmd_medium(args) -> int:
    from .media import SpaceWeather, make_medium
    medium = make_medium("reference")
    epoch = Epoch.parse(args.epoch)
    weather = SpaceWeather(args.kp, args.r12, epoch)
    axis_vals = np.linspace(-args.extent, args.extent, args.points)
    args.outdir.mkdir(parents=True, exist_ok=True)
    out = args.outdir / f"medium_{args.slice}_kp{args.kp:g}_r12{args.r12:g}.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{args.slice[0]}_re", f"{args.slice[1]}_re", "n_e"])
        for a in axis_vals:
            for b in axis_vals:
                x, y, z = (a, b, 0.0) if args.slice == "xy" else (a, 0.0, b)
                if x * x + y * y + z * z <= 1.0:
                    ne = 0.0
                else:
                    pos = from_sm_frame(SmPosition(x * R_EARTH_KM, y * R_EARTH_KM, z * R_EARTH_KM),
                                        epoch, np.array(medium.axis))
                    ne = medium.sample(tuple(pos.position), weather).n_e
                w.writerow([f"{a:.6g}", f"{b:.6g}", repr(float(ne))])
    _log(args)(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "trace": cmd_trace,
               "medium": cmd_medium}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
