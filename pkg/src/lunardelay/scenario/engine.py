"""Batch engine: per-link solves, counting, binning and bin statistics."""
from __future__ import annotations

import math
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..delays import DelayBreakdown, breakdown
from ..frames import Epoch, GeometryError
from ..link import DllParams, LinkBudget, dll_sigma, link_seed, nearest_rank, total_uere
from ..media import SpaceWeather, make_medium
from ..raytrace import OccultationError, RunawayError, ShootingOptions, solve_initial_direction
from .links import VISIBLE, link_budget, screen_links

SUMMARY_METRICS = ("d_total", "d_i1_los", "d_i2", "d_i3", "d_len", "d_i1_bend",
                   "c_n0", "noise", "uere")

EMITTED = "emitted"
OCCULTED = "occulted"
UNTRACKABLE = "untrackable"
NON_CONVERGED = "non_converged"


@dataclass(frozen=True)
class LinkTask:
    key: tuple                   # canonical sort key
    epoch: Epoch
    tx: str
    rx: str
    freq_label: str
    freq_hz: float
    kp: float
    r12: float
    medium_epoch: Epoch
    tx_pos: tuple
    rx_pos: tuple
    tangential_alt_km: float
    budget: LinkBudget


@dataclass(frozen=True)
class LinkRecord:
    epoch: Epoch
    tx: str
    rx: str
    freq_label: str
    freq_hz: float
    kp: float
    r12: float
    tangential_alt_km: float
    delays: DelayBreakdown
    budget: LinkBudget
    dll_sigma_m: float
    uere_mean_m: float
    uere_p95_m: float
    uere_p99_m: float
    outer_iterations: int
    miss_m: float

    def validate(self) -> None:
        self.delays.validate()
        self.budget.validate()
        if not self.budget.trackable:
            raise ValueError("untrackable link emitted as a record")
        for v in (self.tangential_alt_km, self.dll_sigma_m, self.uere_mean_m,
                  self.uere_p95_m, self.uere_p99_m, self.miss_m):
            if not math.isfinite(v):
                raise ValueError("record contains a non-finite value")

    def metric(self, name: str) -> float:
        if name == "c_n0":
            return self.budget.c_n0
        if name == "noise":
            return self.dll_sigma_m
        if name == "uere":
            return self.uere_mean_m
        return getattr(self.delays, name)


@dataclass(frozen=True)
class LinkOutcome:
    key: tuple
    status: str
    record: LinkRecord | None = None
    detail: str = ""
    outer_iterations: int = 0
    miss_m: float = math.nan


@dataclass(frozen=True)
class BinSummary:
    lo_km: float
    hi_km: float
    count: int
    stats: dict                  # metric -> (mean, p95, p99)


@dataclass
class RunResult:
    records: list[LinkRecord]
    summaries: dict              # (kp, r12, freq_label) -> list[BinSummary]
    counts: Counter
    group_counts: dict           # (kp, r12, freq_label) -> Counter
    failures: list[LinkOutcome] = field(default_factory=list)
    wall_time_s: float = 0.0
    candidates: int = 0

    def conserved(self) -> bool:
        c = self.counts
        return self.candidates == c[EMITTED] + c[OCCULTED] + c[UNTRACKABLE] + c[NON_CONVERGED]


# --------------------------------------------------------------------------
# Per-link work (runs in worker processes)

@dataclass(frozen=True)
class SolveContext:
    medium_kind: str
    medium_params: dict
    solver: ShootingOptions
    uere_samples: int
    seed: int


_CTX: dict = {}


def _init_worker(ctx: SolveContext):
    _CTX["ctx"] = ctx
    _CTX["medium"] = make_medium(ctx.medium_kind, **ctx.medium_params)


def _context():
    return _CTX["ctx"], _CTX["medium"]


def process_link(task: LinkTask, ctx: SolveContext | None = None, medium=None) -> LinkOutcome:
    """Shooting solve, delay breakdown, DLL noise and UERE for one visible, trackable link."""
    if ctx is None:
        ctx, medium = _context()
    elif medium is None:
        medium = make_medium(ctx.medium_kind, **ctx.medium_params)
    weather = SpaceWeather(task.kp, task.r12, task.medium_epoch)
    tx, rx = np.array(task.tx_pos), np.array(task.rx_pos)
    try:
        res = solve_initial_direction(tx, rx, task.freq_hz, medium, weather, ctx.solver)
    except OccultationError as exc:
        return LinkOutcome(task.key, OCCULTED, detail=str(exc))
    except (GeometryError, RunawayError) as exc:
        return LinkOutcome(task.key, NON_CONVERGED, detail=f"{type(exc).__name__}: {exc}")
    if not res.converged:
        return LinkOutcome(task.key, NON_CONVERGED, detail=res.stop_reason,
                           outer_iterations=res.outer_iterations, miss_m=res.miss_distance)
    delays = breakdown(res, tx, rx, medium, weather, ctx.solver.step_table)
    sigma = dll_sigma(task.budget.c_n0, DllParams.for_frequency(task.freq_hz))
    seed = link_seed(ctx.seed, task.epoch.isoformat(), task.tx, task.rx, task.freq_label)
    mean, p95, p99 = total_uere(delays.d_total, sigma, ctx.uere_samples, seed)
    rec = LinkRecord(task.epoch, task.tx, task.rx, task.freq_label, task.freq_hz, task.kp,
                     task.r12, task.tangential_alt_km, delays, task.budget, sigma,
                     mean, p95, p99, res.outer_iterations, res.miss_distance)
    rec.validate()
    return LinkOutcome(task.key, EMITTED, rec, outer_iterations=res.outer_iterations,
                       miss_m=res.miss_distance)


def _process_in_worker(task: LinkTask) -> LinkOutcome:
    return process_link(task)


# --------------------------------------------------------------------------
# Binning and statistics

def bin_index(alt_km: float, edges) -> int | None:
    """Index of the half-open bin [lo, hi) holding ``alt_km``; None if outside."""
    k = int(np.searchsorted(edges, alt_km, side="right")) - 1
    if 0 <= k < len(edges) - 1:
        return k
    return None


def summarize_bins(records, edges) -> list[BinSummary]:
    """Per-bin mean, p95 and p99 of each metric; only populated bins are returned."""
    groups: dict[int, list[LinkRecord]] = {}
    for r in records:
        k = bin_index(r.tangential_alt_km, edges)
        if k is not None:
            groups.setdefault(k, []).append(r)
    out = []
    for k in sorted(groups):
        recs = groups[k]
        stats = {}
        for m in SUMMARY_METRICS:
            v = np.array([r.metric(m) for r in recs])
            stats[m] = (float(np.mean(v)), nearest_rank(v, 95.0), nearest_rank(v, 99.0))
        out.append(BinSummary(float(edges[k]), float(edges[k + 1]), len(recs), stats))
    return out


# --------------------------------------------------------------------------
# Driver

def build_tasks(cfg, log=None):
    """Screen every epoch; returns (tasks, pre-solve outcomes, candidate count)."""
    tasks, outcomes = [], []
    freq_index = {lab: i for i, (lab, _) in enumerate(cfg.frequencies)}
    for ie, epoch in enumerate(cfg.epochs):
        geoms = screen_links(cfg, epoch)
        medium_epoch = cfg.medium_epoch_at(epoch)
        for ik, kp in enumerate(cfg.kp_values):
            for ir, r12 in enumerate(cfg.r12_values):
                for lab, hz in cfg.frequencies:
                    for g in geoms:
                        key = (ik, ir, freq_index[lab], ie, g.tx, g.rx)
                        if g.status != VISIBLE:
                            outcomes.append(LinkOutcome(key, OCCULTED, detail=g.status))
                            continue
                        budget = link_budget(cfg, g, hz)
                        if not budget.trackable:
                            outcomes.append(LinkOutcome(key, UNTRACKABLE,
                                                        detail=f"C/N0 {budget.c_n0:.2f} dB-Hz"))
                            continue
                        tasks.append(LinkTask(key, epoch, g.tx, g.rx, lab, hz, kp, r12,
                                              medium_epoch, tuple(g.tx_pos), tuple(g.rx_pos),
                                              g.tangential_alt_km, budget))
        if log:
            log(f"screened epoch {ie + 1}/{len(cfg.epochs)}: {len(tasks)} solves queued")
    return tasks, outcomes, len(tasks) + len(outcomes)


def run_tasks(tasks, ctx: SolveContext, workers: int = 1, log=None) -> list[LinkOutcome]:
    results = []
    step = max(1, len(tasks) // 20)
    if workers <= 1:
        _init_worker(ctx)
        for i, t in enumerate(tasks):
            results.append(process_link(t))
            if log and (i + 1) % step == 0:
                log(f"solved {i + 1}/{len(tasks)}")
        return results
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        for i, out in enumerate(pool.map(_process_in_worker, tasks, chunksize=chunk)):
            results.append(out)
            if log and (i + 1) % step == 0:
                log(f"solved {i + 1}/{len(tasks)}")
    return results


def run_scenario(cfg, workers: int | None = None, quiet: bool = True) -> RunResult:
    """Solve every visible link for every epoch, weather point and frequency."""
    start = time.perf_counter()
    log = None if quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    tasks, outcomes, candidates = build_tasks(cfg, log)
    ctx = SolveContext(cfg.medium_kind, dict(cfg.medium_params), cfg.solver,
                       cfg.uere_samples, cfg.seed)
    outcomes += run_tasks(tasks, ctx, workers or cfg.workers, log)
    outcomes.sort(key=lambda o: o.key)

    counts: Counter = Counter()
    group_counts: dict = {}
    groups: dict = {}
    records, failures = [], []
    for o in outcomes:
        ik, ir, jf = o.key[:3]
        gkey = (cfg.kp_values[ik], cfg.r12_values[ir], cfg.frequencies[jf][0])
        counts[o.status] += 1
        group_counts.setdefault(gkey, Counter())[o.status] += 1
        if o.status == EMITTED:
            records.append(o.record)
            groups.setdefault(gkey, []).append(o.record)
        elif o.status == NON_CONVERGED:
            failures.append(o)
    summaries = {k: summarize_bins(v, cfg.bin_edges_km) for k, v in groups.items()}
    return RunResult(records, summaries, counts, group_counts, failures,
                     time.perf_counter() - start, candidates)
