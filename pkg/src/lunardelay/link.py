"""Antenna gains, C/N0, DLL thermal noise and UERE statistics."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .constants import C_M_S, FREQ_L1, FREQ_L5

DEFAULT_NOISE_DENSITY_DBW_HZ = -208.5
DEFAULT_TRACKING_THRESHOLD_DBHZ = 18.0
DEFAULT_EIRP_DBW = 27.0
DEFAULT_UERE_SAMPLES = 100

BORESIGHT_NADIR = "nadir"
BORESIGHT_EARTH = "earth"


# --------------------------------------------------------------------------
# Antenna patterns

@dataclass(frozen=True, eq=False)
class AntennaPattern:
    name: str
    angles_deg: np.ndarray
    gains_dbi: np.ndarray
    boresight: str = BORESIGHT_NADIR

    def __post_init__(self):
        a = np.asarray(self.angles_deg, dtype=float)
        g = np.asarray(self.gains_dbi, dtype=float)
        if a.ndim != 1 or a.shape != g.shape:
            raise ValueError("pattern angle and gain columns must have equal length")
        if len(a) == 0:
            raise ValueError(f"antenna pattern {self.name!r} has an empty gain table")
        if a[0] != 0.0 or np.any(np.diff(a) <= 0.0):
            raise ValueError("pattern angles must start at 0 and be strictly increasing")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(g))):
            raise ValueError("pattern table contains non-finite values")
        if self.boresight not in (BORESIGHT_NADIR, BORESIGHT_EARTH):
            raise ValueError(f"unknown boresight rule {self.boresight!r}")
        a.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "gains_dbi", g)

    @property
    def peak_dbi(self) -> float:
        return float(self.gains_dbi[0])


def gain_lookup(pattern: AntennaPattern, off_boresight_deg: float) -> float:
    """Linear interpolation in the gain table; clamped beyond the last node."""
    if not 0.0 <= off_boresight_deg <= 180.0:
        raise ValueError("off-boresight angle must lie in [0, 180] degrees")
    return float(np.interp(off_boresight_deg, pattern.angles_deg, pattern.gains_dbi))


def parametric_pattern(name: str, peak_dbi: float, hpbw_deg: float, floor_dbi: float,
                       boresight: str = BORESIGHT_NADIR, step_deg: float = 0.5,
                       max_deg: float = 180.0) -> AntennaPattern:
    """Parabolic main lobe (-3 dB at half the beamwidth) on a flat shelf."""
    angles = np.arange(0.0, max_deg + 0.5 * step_deg, step_deg)
    gains = np.maximum(peak_dbi - 12.0 * (angles / hpbw_deg) ** 2, floor_dbi)
    return AntennaPattern(name, angles, gains, boresight)


def default_receiver_pattern() -> AntennaPattern:
    return parametric_pattern("lunar-rx", 14.0, 6.0, -16.0, BORESIGHT_EARTH)


def default_gps_pattern() -> AntennaPattern:
    return parametric_pattern("gps-tx", 13.0, 42.0, -5.0, BORESIGHT_NADIR)


def default_galileo_pattern() -> AntennaPattern:
    return parametric_pattern("galileo-tx", 14.5, 40.0, -6.0, BORESIGHT_NADIR)


def load_pattern_csv(path: str | Path, name: str | None = None,
                     boresight: str = BORESIGHT_NADIR) -> AntennaPattern:
    path = Path(path)
    angles, gains = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        if reader.fieldnames is None or set(reader.fieldnames) != {"angle_deg", "gain_dbi"}:
            raise ValueError(f"{path}: expected header angle_deg,gain_dbi")
        for row in reader:
            angles.append(float(row["angle_deg"]))
            gains.append(float(row["gain_dbi"]))
    return AntennaPattern(name or path.stem, np.array(angles), np.array(gains), boresight)


def write_pattern_csv(path: str | Path, pattern: AntennaPattern) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg", "gain_dbi"])
        for a, g in zip(pattern.angles_deg, pattern.gains_dbi):
            w.writerow([f"{a:g}", f"{g:.4f}"])


def off_boresight_angle(own_pos, other_pos, boresight: str = BORESIGHT_NADIR) -> float:
    """Angle [deg] between the boresight and the direction to ``other_pos``.

    Both boresight rules point at the Earth's centre (ECI origin): nadir for
    Earth orbiters and Earth-pointing for lunar receivers.
    """
    own = np.asarray(own_pos, dtype=float)
    los = np.asarray(other_pos, dtype=float) - own
    axis = -own
    c = float(los @ axis) / (np.linalg.norm(los) * np.linalg.norm(axis))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


# --------------------------------------------------------------------------
# Link budget

@dataclass(frozen=True)
class SystemParams:
    noise_density_dbw_hz: float = DEFAULT_NOISE_DENSITY_DBW_HZ
    threshold_dbhz: float = DEFAULT_TRACKING_THRESHOLD_DBHZ
    losses_db: float = 0.0


@dataclass(frozen=True)
class LinkBudget:
    eirp_dbw: float
    tx_gain_dbi: float
    rx_gain_dbi: float
    fspl_db: float
    c_n0: float
    trackable: bool
    threshold_dbhz: float = DEFAULT_TRACKING_THRESHOLD_DBHZ

    def validate(self) -> None:
        for v in (self.eirp_dbw, self.tx_gain_dbi, self.rx_gain_dbi, self.fspl_db, self.c_n0):
            if not math.isfinite(v):
                raise ValueError("link budget contains a non-finite value")
        if self.trackable != (self.c_n0 >= self.threshold_dbhz):
            raise ValueError("trackable flag disagrees with the C/N0 threshold")


def free_space_loss_db(distance_km: float, f: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * distance_km * 1e3 * f / C_M_S)


def compute_cn0(tx, rx, tx_pattern: AntennaPattern, rx_pattern: AntennaPattern,
                eirp_dbw: float, f: float, system: SystemParams | None = None) -> LinkBudget:
    """C/N0 [dB-Hz] for ECI states (or position vectors) of tx and rx.

    ``eirp_dbw`` is referenced to the transmit boresight; the off-boresight
    gain delta of the transmit pattern is added to it.
    """
    system = system or SystemParams()
    tx_pos = np.asarray(getattr(tx, "position", tx), dtype=float)
    rx_pos = np.asarray(getattr(rx, "position", rx), dtype=float)
    dist = float(np.linalg.norm(rx_pos - tx_pos))
    tx_gain = gain_lookup(tx_pattern, off_boresight_angle(tx_pos, rx_pos, tx_pattern.boresight))
    rx_gain = gain_lookup(rx_pattern, off_boresight_angle(rx_pos, tx_pos, rx_pattern.boresight))
    fspl = free_space_loss_db(dist, f)
    cn0 = (eirp_dbw + tx_gain - tx_pattern.peak_dbi - fspl + rx_gain
           - system.losses_db - system.noise_density_dbw_hz)
    return LinkBudget(eirp_dbw, tx_gain, rx_gain, fspl, cn0,
                      cn0 >= system.threshold_dbhz, system.threshold_dbhz)


# --------------------------------------------------------------------------
# Code tracking noise

@dataclass(frozen=True)
class DllParams:
    b_dll: float = 0.1          # Hz
    d: float = 0.3              # chips
    t_coh: float = 0.02         # s
    t_chip: float = 0.978e-6    # s
    b_fe: float = 2.046e6       # Hz

    def __post_init__(self):
        if not all(v > 0 for v in (self.b_dll, self.d, self.t_coh, self.t_chip, self.b_fe)):
            raise ValueError("DLL parameters must be positive")
        if self.d > 1.0:
            raise ValueError("correlator spacing must not exceed 1 chip")

    @classmethod
    def for_frequency(cls, f: float) -> "DllParams":
        if abs(f - FREQ_L5) < 1e3:
            return L5_DLL
        if abs(f - FREQ_L1) < 1e3:
            return L1_DLL
        raise ValueError(f"no default DLL parameters for {f / 1e6:.2f} MHz")


L1_DLL = DllParams()
L5_DLL = DllParams(t_chip=0.0978e-6, b_fe=20.46e6)


def dll_case(p: DllParams) -> int:
    """1: wide spacing, 2: spacing below the front-end resolution, 3: in between."""
    tb = p.t_chip * p.b_fe
    if p.d >= math.pi / tb:
        return 1
    if p.d <= 1.0 / tb:
        return 2
    return 3


def dll_variance(cn0_linear: float, p: DllParams, case: int | None = None) -> float:
    """Coherent early-minus-late DLL thermal-noise variance [chips^2]."""
    if not cn0_linear > 0.0:
        raise ValueError("C/N0 must be positive")
    case = dll_case(p) if case is None else case
    tb = p.t_chip * p.b_fe
    k = p.b_dll / (2.0 * cn0_linear)
    if case == 1:
        return k * p.d * (1.0 + 2.0 / (p.t_coh * cn0_linear * (2.0 - p.d)))
    if case == 2:
        return k * (1.0 / tb) * (1.0 + 1.0 / (p.t_coh * cn0_linear))
    if case == 3:
        return (k * (1.0 / tb + tb / (math.pi - 1.0) * (p.d - 1.0 / tb) ** 2)
                * (1.0 + 2.0 / (p.t_coh * cn0_linear * (2.0 - p.d))))
    raise ValueError(f"unknown DLL case {case}")


def dll_sigma(c_n0_dbhz: float, p: DllParams = L1_DLL) -> float:
    """One-sigma DLL thermal noise [m]."""
    var = dll_variance(10.0 ** (c_n0_dbhz / 10.0), p)
    return math.sqrt(var) * C_M_S * p.t_chip


# --------------------------------------------------------------------------
# UERE

def nearest_rank(values, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * N)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("percentile of an empty set")
    rank = max(1, math.ceil(pct / 100.0 * len(v)))
    return float(v[rank - 1])


def link_seed(seed: int, *key: object) -> int:
    """64-bit stream seed: first 8 bytes of sha256 over seed and key fields joined by '|'."""
    text = "|".join([str(int(seed))] + [str(k) for k in key])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def total_uere(d_total: float, sigma: float, n_samples: int = DEFAULT_UERE_SAMPLES,
               seed: int | np.random.Generator = 0) -> tuple[float, float, float]:
    """Mean, p95 and p99 of |d_total + eps| over ``n_samples`` draws eps ~ N(0, sigma)."""
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = rng.normal(0.0, 1.0, n_samples) * sigma
    err = np.abs(d_total + eps)
    return float(np.mean(err)), nearest_rank(err, 95.0), nearest_rank(err, 99.0)


def summarize(values: Iterable[float]) -> tuple[float, float, float]:
    v = np.asarray(list(values), dtype=float)
    return float(np.mean(v)), nearest_rank(v, 95.0), nearest_rank(v, 99.0)
