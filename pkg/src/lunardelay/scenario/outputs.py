"""CSV and manifest emission for scenario runs."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
from pathlib import Path

import numpy as np

from .. import __version__
from .engine import EMITTED, NON_CONVERGED, OCCULTED, SUMMARY_METRICS, UNTRACKABLE, RunResult, bin_index

RECORD_COLUMNS = (
    "epoch", "epoch_s", "kp", "r12", "tx", "rx", "freq", "freq_hz", "tangential_alt_km",
    "bin_lo_km", "bin_hi_km",
    "d_total_m", "d_i1_los_m", "d_i2_m", "d_i3_m", "d_i1_bend_m", "d_len_m",
    "tec_los", "tec_bend", "c_n0_dbhz", "tx_gain_dbi", "rx_gain_dbi", "fspl_db",
    "dll_sigma_m", "uere_mean_m", "uere_p95_m", "uere_p99_m", "outer_iterations", "miss_m",
)

HISTOGRAM_METRICS = ("d_total", "d_i1_los", "d_i2", "d_i3", "d_len", "d_i1_bend")
# log-spaced |value| bins [m]: 1e-6 .. 1e3, ten per decade, plus under/overflow
HIST_EDGES = np.concatenate(([0.0], np.logspace(-6, 3, 91), [math.inf]))


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v + 0.0)
    return str(v)


def _num(x: float) -> str:
    return _fmt(float(x))


def preflight(outdir: Path) -> None:
    """Fail before any compute if ``outdir`` cannot be created or written."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {outdir} is not writable: {exc}") from exc


def _label(x: float) -> str:
    return f"{x:g}"


def summary_filename(kp: float, r12: float, freq: str) -> str:
    return f"summary_{_label(kp)}_{_label(r12)}_{freq}.csv"


def write_records(path: Path, records, edges) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            k = bin_index(r.tangential_alt_km, edges)
            lo, hi = ("", "") if k is None else (_num(edges[k]), _num(edges[k + 1]))
            d, b = r.delays, r.budget
            w.writerow([r.epoch.isoformat(), _num(r.epoch.t), _num(r.kp), _num(r.r12), r.tx, r.rx,
                        r.freq_label, _num(r.freq_hz), _num(r.tangential_alt_km), lo, hi,
                        _num(d.d_total), _num(d.d_i1_los), _num(d.d_i2), _num(d.d_i3),
                        _num(d.d_i1_bend), _num(d.d_len), _num(d.tec_los), _num(d.tec_bend),
                        _num(b.c_n0), _num(b.tx_gain_dbi), _num(b.rx_gain_dbi), _num(b.fspl_db),
                        _num(r.dll_sigma_m), _num(r.uere_mean_m), _num(r.uere_p95_m),
                        _num(r.uere_p99_m), r.outer_iterations, _num(r.miss_m)])


def write_summary(path: Path, bins) -> None:
    cols = ["bin_lo_km", "bin_hi_km", "count"]
    for m in SUMMARY_METRICS:
        cols += [f"{m}_mean", f"{m}_p95", f"{m}_p99"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for b in bins:
            row = [_num(b.lo_km), _num(b.hi_km), b.count]
            for m in SUMMARY_METRICS:
                row += [_num(v) for v in b.stats[m]]
            w.writerow(row)


def write_histograms(outdir: Path, result: RunResult) -> list[Path]:
    """One file per delay metric: counts of |value| per log bin for each weather/frequency group."""
    groups: dict = {}
    for r in result.records:
        groups.setdefault((r.kp, r.r12, r.freq_label), []).append(r)
    paths = []
    for m in HISTOGRAM_METRICS:
        p = outdir / f"histogram_{m}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kp", "r12", "freq", "abs_lo_m", "abs_hi_m", "count"])
            for key in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
                vals = np.abs([getattr(r.delays, m) for r in groups[key]])
                counts, _ = np.histogram(vals, HIST_EDGES)
                for lo, hi, c in zip(HIST_EDGES[:-1], HIST_EDGES[1:], counts):
                    w.writerow([_num(key[0]), _num(key[1]), key[2], _num(lo), _num(hi), int(c)])
        paths.append(p)
    return paths


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_manifest(path: Path, result: RunResult, config_echo: dict, seed: int) -> None:
    iters = [r.outer_iterations for r in result.records]
    manifest = {
        "version": __version__,
        "python": platform.python_version(),
        "seed": seed,
        "wall_time_s": round(result.wall_time_s, 3),
        "config": config_echo,
        "counts": {
            "candidates": result.candidates,
            "emitted": result.counts[EMITTED],
            "occulted": result.counts[OCCULTED],
            "untrackable": result.counts[UNTRACKABLE],
            "non_converged": result.counts[NON_CONVERGED],
        },
        "groups": [
            {"kp": k[0], "r12": k[1], "freq": k[2],
             **{s: c[s] for s in (EMITTED, OCCULTED, UNTRACKABLE, NON_CONVERGED)}}
            for k, c in sorted(result.group_counts.items())
        ],
        "convergence": {
            "mean_outer_iterations": float(np.mean(iters)) if iters else None,
            "max_outer_iterations": max(iters) if iters else None,
            "max_miss_m": max((r.miss_m for r in result.records), default=None),
        },
        "non_converged": [
            {"key": [str(v) for v in f.key], "detail": f.detail,
             "outer_iterations": f.outer_iterations, "miss_m": f.miss_m}
            for f in result.failures
        ],
    }
    path.write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")


def emit_outputs(result: RunResult, outdir, config_echo: dict, seed: int,
                 bin_edges) -> list[Path]:
    outdir = Path(outdir)
    preflight(outdir)
    written = []
    p = outdir / "records.csv"
    write_records(p, result.records, bin_edges)
    written.append(p)
    for (kp, r12, freq), bins in sorted(result.summaries.items()):
        if not bins:
            continue
        p = outdir / summary_filename(kp, r12, freq)
        write_summary(p, bins)
        written.append(p)
    if result.records:
        written += write_histograms(outdir, result)
    p = outdir / "run_manifest.json"
    write_manifest(p, result, config_echo, seed)
    written.append(p)
    return written
