"""Scenario configuration: YAML ingestion, validation and defaults."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..constants import FREQUENCY_LABELS, GM_EARTH, GM_MOON
from ..frames import Epoch, Frame, KeplerEphemeris, SurfaceSite, load_elements_csv, load_ephemeris_csv
from ..link import (BORESIGHT_EARTH, BORESIGHT_NADIR, DEFAULT_EIRP_DBW, AntennaPattern,
                    SystemParams, default_gps_pattern, default_receiver_pattern,
                    load_pattern_csv)
from ..media import ReferenceParams, make_medium
from ..raytrace import DEFAULT_STEP_TABLE, ShootingOptions

DEFAULT_BIN_EDGES_KM = (0.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0, 6000.0,
                        8000.0, 10000.0, 15000.0, 20000.0)
DEFAULT_STEP_MINUTES = 30.0
DEFAULT_SPAN_HOURS = 45.0
GM_BY_NAME = {"earth": GM_EARTH, "moon": GM_MOON}


class ConfigError(ValueError):
    """Validation failure; ``problems`` holds (key path, line, message) triples."""

    def __init__(self, problems: list[tuple[str, int | None, str]], source: str = "config"):
        self.problems = problems
        lines = [f"{source}:{line if line is not None else '?'}: {key}: {msg}"
                 for key, line, msg in problems]
        super().__init__("invalid configuration\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class Transmitter:
    name: str
    source: Any                     # EphemerisSource
    eirp_dbw: float
    pattern: AntennaPattern


@dataclass(frozen=True)
class Receiver:
    name: str
    source: Any
    pattern: AntennaPattern
    surface: SurfaceSite | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    epochs: tuple[Epoch, ...]
    kp_values: tuple[float, ...]
    r12_values: tuple[float, ...]
    frequencies: tuple[tuple[str, float], ...]
    transmitters: tuple[Transmitter, ...]
    receivers: tuple[Receiver, ...]
    medium_kind: str = "reference"
    medium_params: dict = field(default_factory=dict)
    medium_epoch: Epoch | None = None
    solver: ShootingOptions = field(default_factory=ShootingOptions)
    system: SystemParams = field(default_factory=SystemParams)
    uere_samples: int = 100
    bin_edges_km: tuple[float, ...] = DEFAULT_BIN_EDGES_KM
    output_dir: Path = Path("output")
    seed: int = 0
    workers: int = 1
    raw: dict = field(default_factory=dict)

    def medium(self):
        return make_medium(self.medium_kind, **self.medium_params)

    def medium_epoch_at(self, epoch: Epoch) -> Epoch:
        """Medium epoch advances with simulation time from its own start."""
        if self.medium_epoch is None:
            return epoch
        return self.medium_epoch + (epoch - self.epochs[0])

    def with_overrides(self, **kw) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **kw)


# --------------------------------------------------------------------------
# YAML with line numbers

def _line_map(node, prefix="", out=None) -> dict[str, int]:
    """Dotted key path -> 1-based line for every node in a composed YAML tree."""
    out = {} if out is None else out
    out.setdefault(prefix or "<root>", node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{prefix}[{i}]", out)
    return out


SCHEMA: dict[str, Any] = {
    "epochs": {"start": None, "span_hours": None, "step_minutes": None, "list": None,
               "limit": None},
    "medium": {"kind": None, "epoch": None, "params": "*"},
    "weather": {"kp": None, "r12": None},
    "frequencies": None,
    "transmitters": [{"name": None, "elements": None, "ephemeris": None, "gm": None,
                      "frame": None, "eirp_dbw": None, "pattern": None,
                      "boresight": None, "include": None}],
    "receivers": {"orbiters": [{"name": None, "elements": None, "ephemeris": None,
                                "gm": None, "frame": None, "include": None}],
                  "surface": [{"name": None, "lat_deg": None, "lon_deg": None,
                               "alt_km": None, "elevation_mask_deg": None}],
                  "pattern": None},
    "solver": {"miss_threshold_m": None, "delay_tol_m": None, "max_outer": None,
               "simplex_scale": None, "step_table": None},
    "link": {"noise_density_dbw_hz": None, "threshold_dbhz": None, "losses_db": None,
             "uere_samples": None},
    "bins_km": None,
    "output": {"directory": None},
    "seed": None,
    "workers": None,
}


def _check_keys(data, schema, path, problems, lines):
    if schema is None or schema == "*":
        return
    if isinstance(schema, list):
        if not isinstance(data, list):
            problems.append((path, lines.get(path), "expected a list"))
            return
        for i, item in enumerate(data):
            _check_keys(item, schema[0], f"{path}[{i}]", problems, lines)
        return
    if not isinstance(data, dict):
        problems.append((path or "<root>", lines.get(path or "<root>"), "expected a mapping"))
        return
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in schema:
            problems.append((sub, lines.get(sub), "unknown key"))
        else:
            _check_keys(value, schema[key], sub, problems, lines)


class _Reader:
    """Typed accessors that record problems instead of raising."""

    def __init__(self, lines, problems, base: Path):
        self.lines = lines
        self.problems = problems
        self.base = base

    def err(self, key, msg):
        self.problems.append((key, self.lines.get(key), msg))

    def number(self, d, key, path, default=None, lo=None, hi=None, integer=False):
        if d is None or key not in d:
            return default
        v = d[key]
        full = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(full, f"expected a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.err(full, "expected an integer")
            return default
        if not math.isfinite(v) or (lo is not None and v < lo) or (hi is not None and v > hi):
            self.err(full, f"value {v} outside [{lo}, {hi}]")
            return default
        return int(v) if integer else float(v)

    def number_list(self, d, key, path, default, lo=None, hi=None):
        if d is None or key not in d:
            return default
        v = d[key]
        full = f"{path}.{key}" if path else key
        if not isinstance(v, list):
            v = [v]
        out = []
        for x in v:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                self.err(full, f"expected numbers, got {x!r}")
                continue
            if (lo is not None and x < lo) or (hi is not None and x > hi):
                self.err(full, f"value {x} outside [{lo}, {hi}]")
                continue
            out.append(float(x))
        if not out:
            self.err(full, "needs at least one value")
        return tuple(out)

    def path(self, value, key):
        p = Path(value)
        if not p.is_absolute():
            p = self.base / p
        if not p.exists():
            self.err(key, f"file not found: {p}")
            return None
        return p


def _data_path(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "data" / name


def _epochs(r: _Reader, d) -> tuple[Epoch, ...]:
    d = d or {}
    if "list" in d:
        try:
            eps = tuple(Epoch.parse(x) for x in d["list"])
        except (TypeError, ValueError) as exc:
            r.err("epochs.list", str(exc))
            return ()
    else:
        if "start" not in d:
            r.err("epochs.start", "required")
            return ()
        try:
            start = Epoch.parse(d["start"])
        except (TypeError, ValueError) as exc:
            r.err("epochs.start", str(exc))
            return ()
        span = r.number(d, "span_hours", "epochs", DEFAULT_SPAN_HOURS, lo=0.0)
        step = r.number(d, "step_minutes", "epochs", DEFAULT_STEP_MINUTES, lo=1e-6)
        n = int(math.floor(span * 60.0 / step + 1e-9)) + 1
        eps = tuple(start + k * step * 60.0 for k in range(n))
    limit = r.number(d, "limit", "epochs", None, lo=1, integer=True)
    if limit is not None:
        eps = eps[:limit]
    if not eps:
        r.err("epochs", "no epochs selected")
    return eps


def _frequencies(r: _Reader, v) -> tuple[tuple[str, float], ...]:
    if v is None:
        return (("L1", FREQUENCY_LABELS["L1"]),)
    out = []
    for i, item in enumerate(v if isinstance(v, list) else [v]):
        key = f"frequencies[{i}]"
        if isinstance(item, str) and item in FREQUENCY_LABELS:
            out.append((item, FREQUENCY_LABELS[item]))
        elif isinstance(item, dict) and set(item) == {"label", "hz"}:
            hz = item["hz"]
            if isinstance(hz, (int, float)) and hz > 0:
                out.append((str(item["label"]), float(hz)))
            else:
                r.err(key, "hz must be a positive number")
        else:
            r.err("frequencies", f"unknown frequency {item!r}; use one of "
                                 f"{sorted(FREQUENCY_LABELS)} or {{label, hz}}")
    if not out:
        r.err("frequencies", "needs at least one frequency")
    labels = [lab for lab, _ in out]
    if len(set(labels)) != len(labels):
        r.err("frequencies", "duplicate frequency labels")
    return tuple(out)


def _pattern(r: _Reader, value, key, boresight, fallback):
    if value is None:
        return fallback()
    p = r.path(value, key)
    if p is None:
        return None
    try:
        return load_pattern_csv(p, boresight=boresight)
    except ValueError as exc:
        r.err(key, str(exc))
        return None


def _sources(r: _Reader, block, key, default_gm, default_frame):
    """Ephemeris sources of one transmitter/orbiter group as (name, source) pairs."""
    gm_name = block.get("gm", default_gm)
    if gm_name not in GM_BY_NAME:
        r.err(f"{key}.gm", f"expected one of {sorted(GM_BY_NAME)}")
        return []
    try:
        frame = Frame.parse(block.get("frame", default_frame))
    except ValueError as exc:
        r.err(f"{key}.frame", str(exc))
        return []
    include = block.get("include")
    out = []
    if "elements" in block:
        p = r.path(block["elements"], f"{key}.elements")
        if p is None:
            return []
        try:
            for name, el in load_elements_csv(p, GM_BY_NAME[gm_name], frame):
                out.append((name, KeplerEphemeris(el, name)))
        except (ValueError, KeyError) as exc:
            r.err(f"{key}.elements", str(exc))
    elif "ephemeris" in block:
        files = block["ephemeris"] if isinstance(block["ephemeris"], list) else [block["ephemeris"]]
        for i, f in enumerate(files):
            p = r.path(f, f"{key}.ephemeris")
            if p is None:
                continue
            try:
                eph = load_ephemeris_csv(p)
                out.append((eph.name, eph))
            except ValueError as exc:
                r.err(f"{key}.ephemeris", str(exc))
    else:
        r.err(key, "needs 'elements' or 'ephemeris'")
    if include is not None:
        keep = set(include)
        unknown = keep - {n for n, _ in out}
        if unknown:
            r.err(f"{key}.include", f"unknown satellites {sorted(unknown)}")
        out = [(n, s) for n, s in out if n in keep]
    prefix = block.get("name")
    if prefix and "ephemeris" in block and len(out) == 1:
        out = [(prefix, out[0][1])]
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
    """Parse and validate a scenario YAML file; every problem is reported at once."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("<file>", None, str(exc))], str(path)) from exc
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError([("<syntax>", line, str(getattr(exc, "problem", exc)))], str(path)) from exc
    if data is None:
        data = {}
    lines = _line_map(node) if node is not None else {}
    problems: list = []
    _check_keys(data, SCHEMA, "", problems, lines)
    if problems:
        raise ConfigError(problems, str(path))
    r = _Reader(lines, problems, path.parent)

    epochs = _epochs(r, data.get("epochs"))

    med = data.get("medium") or {}
    kind = med.get("kind", "reference")
    if kind not in ("reference", "vacuum", "spherical"):
        r.err("medium.kind", f"unknown medium {kind!r}")
    params = dict(med.get("params") or {})
    if kind == "reference":
        known = set(ReferenceParams.__dataclass_fields__)
        for k in params:
            if k not in known:
                r.err(f"medium.params.{k}", "unknown medium parameter")
        try:
            ReferenceParams(**{k: v for k, v in params.items() if k in known})
        except (TypeError, ValueError) as exc:
            r.err("medium.params", str(exc))
    medium_epoch = None
    if "epoch" in med:
        try:
            medium_epoch = Epoch.parse(med["epoch"])
        except (TypeError, ValueError) as exc:
            r.err("medium.epoch", str(exc))

    w = data.get("weather") or {}
    kps = r.number_list(w, "kp", "weather", (3.0,), 0.0, 9.0)
    r12s = r.number_list(w, "r12", "weather", (100.0,), 0.0, 300.0)

    freqs = _frequencies(r, data.get("frequencies"))

    transmitters = []
    tx_blocks = data.get("transmitters") or []
    if not tx_blocks:
        r.err("transmitters", "at least one transmitter group is required")
    for i, blk in enumerate(tx_blocks):
        key = f"transmitters[{i}]"
        eirp = r.number(blk, "eirp_dbw", key, DEFAULT_EIRP_DBW)
        bore = blk.get("boresight", BORESIGHT_NADIR)
        if bore not in (BORESIGHT_NADIR, BORESIGHT_EARTH):
            r.err(f"{key}.boresight", f"unknown boresight rule {bore!r}")
            bore = BORESIGHT_NADIR
        pat = _pattern(r, blk.get("pattern"), f"{key}.pattern", bore, default_gps_pattern)
        for name, src in _sources(r, blk, key, "earth", "eci"):
            transmitters.append(Transmitter(name, src, eirp, pat))

    receivers = []
    rx = data.get("receivers") or {}
    rx_pat = _pattern(r, rx.get("pattern"), "receivers.pattern", BORESIGHT_EARTH,
                      default_receiver_pattern)
    for i, blk in enumerate(rx.get("orbiters") or []):
        for name, src in _sources(r, blk, f"receivers.orbiters[{i}]", "moon", "mci"):
            receivers.append(Receiver(name, src, rx_pat))
    for i, blk in enumerate(rx.get("surface") or []):
        key = f"receivers.surface[{i}]"
        lat = r.number(blk, "lat_deg", key, None, -90.0, 90.0)
        lon = r.number(blk, "lon_deg", key, None, -360.0, 360.0)
        if lat is None or lon is None:
            r.err(key, "lat_deg and lon_deg are required")
            continue
        site = SurfaceSite(lat, lon, r.number(blk, "alt_km", key, 0.0, lo=0.0),
                           blk.get("name", f"surface-{i + 1}"),
                           r.number(blk, "elevation_mask_deg", key, 0.0, -90.0, 90.0))
        receivers.append(Receiver(site.name, site, rx_pat, site))
    if not receivers:
        r.err("receivers", "at least one receiver is required")
    names = [t.name for t in transmitters] + [x.name for x in receivers]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        r.err("transmitters", f"duplicate satellite names {dup}")

    s = data.get("solver") or {}
    table = DEFAULT_STEP_TABLE
    if "step_table" in s:
        try:
            table = tuple((math.inf if a in (None, "inf") else float(a), float(b))
                          for a, b in s["step_table"])
        except (TypeError, ValueError):
            r.err("solver.step_table", "expected a list of [altitude_km, step_km] pairs")
    solver = None
    try:
        solver = ShootingOptions(
            miss_threshold_m=r.number(s, "miss_threshold_m", "solver", 100.0, lo=1e-9),
            delay_tol_m=r.number(s, "delay_tol_m", "solver", 1e-3, lo=1e-12),
            max_outer=r.number(s, "max_outer", "solver", 10, lo=1, integer=True),
            simplex_scale=r.number(s, "simplex_scale", "solver", 5e-4, lo=1e-12),
            step_table=table)
    except ValueError as exc:
        r.err("solver", str(exc))

    lk = data.get("link") or {}
    system = SystemParams(
        noise_density_dbw_hz=r.number(lk, "noise_density_dbw_hz", "link", -208.5),
        threshold_dbhz=r.number(lk, "threshold_dbhz", "link", 18.0),
        losses_db=r.number(lk, "losses_db", "link", 0.0))
    n_uere = r.number(lk, "uere_samples", "link", 100, lo=1, integer=True)

    edges = r.number_list(data, "bins_km", "", DEFAULT_BIN_EDGES_KM)
    if any(b <= a for a, b in zip(edges, edges[1:])) or len(edges) < 2:
        r.err("bins_km", "bin edges must be strictly increasing (at least two edges)")

    outdir = Path((data.get("output") or {}).get("directory", "output"))
    if not outdir.is_absolute():
        outdir = path.parent / outdir
    seed = r.number(data, "seed", "", 0, lo=0, integer=True)
    workers = r.number(data, "workers", "", 1, lo=1, integer=True)

    if problems:
        raise ConfigError(problems, str(path))
    cfg = ScenarioConfig(
        epochs=epochs, kp_values=kps, r12_values=r12s, frequencies=freqs,
        transmitters=tuple(transmitters), receivers=tuple(receivers),
        medium_kind=kind, medium_params=params, medium_epoch=medium_epoch,
        solver=solver, system=system, uere_samples=n_uere, bin_edges_km=tuple(edges),
        output_dir=outdir, seed=seed, workers=workers, raw=data)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return cfg


def config_summary(cfg: ScenarioConfig) -> dict:
    """JSON-friendly echo of the resolved configuration."""
    return {
        "epochs": {"first": cfg.epochs[0].isoformat(), "last": cfg.epochs[-1].isoformat(),
                   "count": len(cfg.epochs)},
        "medium": {"kind": cfg.medium_kind, "params": cfg.medium_params,
                   "epoch": cfg.medium_epoch.isoformat() if cfg.medium_epoch else None},
        "weather": {"kp": list(cfg.kp_values), "r12": list(cfg.r12_values)},
        "frequencies": {lab: hz for lab, hz in cfg.frequencies},
        "transmitters": [t.name for t in cfg.transmitters],
        "receivers": [x.name for x in cfg.receivers],
        "solver": {k: (list(map(list, v)) if k == "step_table" else v)
                   for k, v in asdict(cfg.solver).items()},
        "link": {**asdict(cfg.system), "uere_samples": cfg.uere_samples},
        "bins_km": list(cfg.bin_edges_km),
        "seed": cfg.seed,
        "workers": cfg.workers,
    }
