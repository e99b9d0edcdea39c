"""Time tags, reference frames, two-body orbits and link geometry.

Epochs are continuous seconds past 2000-01-01T12:00:00 with no leap-second
handling: calendar strings are mapped onto that scale as if it were uniform.
All positions are km and velocities km/s.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .constants import C_KM_S, GM_EARTH, GM_MOON, R_EARTH_KM, R_MOON_KM

J2000 = datetime(2000, 1, 1, 12, 0, 0, tzinfo=timezone.utc)
JD_J2000 = 2451545.0

DEFAULT_DIPOLE_TILT_DEG = 11.5
# Inertial longitude (right ascension) of the northern dipole pole.
DEFAULT_DIPOLE_LON_DEG = -72.7

# IAU lunar pole and prime meridian at J2000; applied as a fixed rotation.
MOON_POLE_RA_DEG = 269.9949
MOON_POLE_DEC_DEG = 66.5392
MOON_W0_DEG = 38.3213

KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 50


class FrameError(ValueError):
    pass


class KeplerConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Kepler equation did not converge after {iterations} iterations "
            f"(residual {residual:.3e} rad)")
        self.residual = residual
        self.iterations = iterations


class EphemerisGapError(LookupError):
    def __init__(self, start: "Epoch", end: "Epoch", name: str = "ephemeris"):
        super().__init__(
            f"{name} does not cover [{start.t:.6f}, {end.t:.6f}] s past J2000")
        self.start = start
        self.end = end


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Epoch:
    """Time tag split into integer and fractional seconds past J2000.

    Splitting keeps differences exact to well below a nanosecond over
    multi-year spans, which the light-time solution relies on.
    """

    sec: int
    frac: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.frac < 1.0 or not isinstance(self.sec, int):
            whole = math.floor(self.frac)
            object.__setattr__(self, "sec", int(self.sec) + int(whole))
            object.__setattr__(self, "frac", float(self.frac - whole))

    @classmethod
    def from_seconds(cls, t: float) -> "Epoch":
        whole = math.floor(t)
        return cls(int(whole), float(t - whole))

    @classmethod
    def from_iso(cls, text: str) -> "Epoch":
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=timezone.utc)
        delta = stamp - J2000
        whole = delta.days * 86400 + delta.seconds
        return cls(whole, delta.microseconds * 1e-6)

    @classmethod
    def parse(cls, value: "str | float | int | Epoch") -> "Epoch":
        if isinstance(value, Epoch):
            return value
        if isinstance(value, (int, float)):
            return cls.from_seconds(float(value))
        try:
            return cls.from_seconds(float(value))
        except ValueError:
            return cls.from_iso(str(value))

    @property
    def t(self) -> float:
        return self.sec + self.frac

    @property
    def julian_date(self) -> float:
        return JD_J2000 + (self.sec / 86400.0) + self.frac / 86400.0

    def isoformat(self) -> str:
        from datetime import timedelta
        stamp = J2000 + timedelta(seconds=self.sec, microseconds=round(self.frac * 1e6))
        return stamp.strftime("%Y-%m-%dT%H:%M:%S.%f")

    def __add__(self, seconds: float) -> "Epoch":
        whole = math.floor(seconds)
        return Epoch(self.sec + int(whole), self.frac + (seconds - whole))

    def __sub__(self, other):
        if isinstance(other, Epoch):
            return (self.sec - other.sec) + (self.frac - other.frac)
        return self + (-other)


class Frame(str, Enum):
    ECI = "earth-centered-inertial"
    MCI = "moon-centered-inertial"
    SM = "solar-magnetic"

    @classmethod
    def parse(cls, text: "str | Frame") -> "Frame":
        if isinstance(text, Frame):
            return text
        aliases = {"eci": cls.ECI, "mci": cls.MCI, "sm": cls.SM}
        key = str(text).strip()
        if key.lower() in aliases:
            return aliases[key.lower()]
        return cls(key)


_BODY_RADIUS = {Frame.ECI: R_EARTH_KM, Frame.MCI: R_MOON_KM, Frame.SM: R_EARTH_KM}


@dataclass(frozen=True)
class EpochState:
    epoch: Epoch
    frame: Frame
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "frame", Frame.parse(self.frame))
        pos = np.asarray(self.position, dtype=float).reshape(3)
        vel = np.asarray(self.velocity, dtype=float).reshape(3)
        pos.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        if not np.linalg.norm(pos) > _BODY_RADIUS[self.frame]:
            raise FrameError(
                f"position radius {np.linalg.norm(pos):.3f} km is inside the "
                f"{self.frame.value} center body")


@dataclass(frozen=True)
class KeplerianElements:
    a: float
    e: float
    i: float
    raan: float
    argp: float
    M0: float
    gm: float
    epoch: Epoch
    frame: Frame = Frame.ECI

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"semi-major axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must lie in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= 180.0:
            raise ValueError(f"inclination must lie in [0, 180] deg, got {self.i}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.a ** 3 / self.gm)


@dataclass(frozen=True)
class SmPosition:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def solve_kepler(mean_anomaly: float, e: float) -> float:
    """Eccentric anomaly from mean anomaly by Newton iteration."""
    M = math.remainder(mean_anomaly, 2.0 * math.pi)
    E = M if e < 0.8 else math.pi * (1.0 if M >= 0 else -1.0)
    residual = E - e * math.sin(E) - M
    for it in range(KEPLER_MAX_ITER):
        if abs(residual) < KEPLER_TOL:
            return E
        E -= residual / (1.0 - e * math.cos(E))
        residual = E - e * math.sin(E) - M
    if abs(residual) < KEPLER_TOL:
        return E
    raise KeplerConvergenceError(abs(residual), KEPLER_MAX_ITER)


def _perifocal_rotation(i: float, raan: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    cw, sw = math.cos(argp), math.sin(argp)
    ci, si = math.cos(i), math.sin(i)
    return np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])


def kepler_to_state(el: KeplerianElements, at: Epoch) -> EpochState:
    """Two-body state at ``at`` in the frame the elements are referred to."""
    dt = at - el.epoch
    if abs(dt) >= 10 * 365.25 * 86400.0:
        raise ValueError("propagation span exceeds 10 years")
    n = math.sqrt(el.gm / el.a ** 3)
    M = math.radians(el.M0) + n * dt
    E = solve_kepler(M, el.e)
    cE, sE = math.cos(E), math.sin(E)
    fac = math.sqrt(1.0 - el.e * el.e)
    r = el.a * (1.0 - el.e * cE)
    pos_pf = np.array([el.a * (cE - el.e), el.a * fac * sE, 0.0])
    vel_pf = np.array([-sE, fac * cE, 0.0]) * (math.sqrt(el.gm * el.a) / r)
    rot = _perifocal_rotation(math.radians(el.i), math.radians(el.raan),
                              math.radians(el.argp))
    return EpochState(at, el.frame, rot @ pos_pf, rot @ vel_pf)


# --------------------------------------------------------------------------
# Low-precision solar and lunar ephemerides (geocentric, mean equator J2000)

def _ecliptic_to_equatorial(lon: float, lat: float, dist: float, obliquity: float) -> np.ndarray:
    cl, sl = math.cos(lon), math.sin(lon)
    cb, sb = math.cos(lat), math.sin(lat)
    ce, se = math.cos(obliquity), math.sin(obliquity)
    x = cb * cl
    y = cb * sl
    z = sb
    return dist * np.array([x, ce * y - se * z, se * y + ce * z])


def sun_direction(epoch: Epoch) -> np.ndarray:
    """Unit vector from Earth to Sun, good to about 0.01 deg."""
    n = epoch.julian_date - JD_J2000
    L = math.radians((280.460 + 0.9856474 * n) % 360.0)
    g = math.radians((357.528 + 0.9856003 * n) % 360.0)
    lam = L + math.radians(1.915) * math.sin(g) + math.radians(0.020) * math.sin(2 * g)
    eps = math.radians(23.439 - 0.0000004 * n)
    return _ecliptic_to_equatorial(lam, 0.0, 1.0, eps)


def moon_position(epoch: Epoch) -> np.ndarray:
    """Geocentric Moon position [km], low-precision series (~0.3 deg)."""
    T = (epoch.julian_date - JD_J2000) / 36525.0
    d = math.radians

    def s(a, b):
        return math.sin(d(a + b * T))

    def c(a, b):
        return math.cos(d(a + b * T))

    lam = (218.32 + 481267.881 * T
           + 6.29 * s(135.0, 477198.87) - 1.27 * s(259.3, -413335.36)
           + 0.66 * s(235.7, 890534.22) + 0.21 * s(269.9, 954397.74)
           - 0.19 * s(357.5, 35999.05) - 0.11 * s(186.5, 966404.03))
    beta = (5.13 * s(93.3, 483202.02) + 0.28 * s(228.2, 960400.89)
            - 0.28 * s(318.3, 6003.15) - 0.17 * s(217.6, -407332.21))
    parallax = (0.9508 + 0.0518 * c(135.0, 477198.87) + 0.0095 * c(259.3, -413335.36)
                + 0.0078 * c(235.7, 890534.22) + 0.0028 * c(269.9, 954397.74))
    dist = R_EARTH_KM / math.sin(d(parallax))
    eps = d(23.439 - 0.0130 * T)
    return _ecliptic_to_equatorial(d(lam), d(beta), dist, eps)


def moon_state(epoch: Epoch, frame_epoch: Epoch | None = None) -> EpochState:
    h = 30.0
    pos = moon_position(epoch)
    vel = (moon_position(epoch + h) - moon_position(epoch + (-h))) / (2 * h)
    return EpochState(epoch, Frame.ECI, pos, vel)


def moon_fixed_rotation() -> np.ndarray:
    """Fixed rotation taking Moon-fixed vectors into the Moon-centred inertial frame."""
    a = math.radians(MOON_POLE_RA_DEG + 90.0)
    b = math.radians(90.0 - MOON_POLE_DEC_DEG)
    w = math.radians(MOON_W0_DEG)

    def rz(t):
        return np.array([[math.cos(t), -math.sin(t), 0], [math.sin(t), math.cos(t), 0], [0, 0, 1]])

    def rx(t):
        return np.array([[1, 0, 0], [0, math.cos(t), -math.sin(t)], [0, math.sin(t), math.cos(t)]])

    return rz(a) @ rx(b) @ rz(w)


def to_eci(state: EpochState) -> EpochState:
    if state.frame is Frame.ECI:
        return state
    if state.frame is Frame.MCI:
        moon = moon_state(state.epoch)
        return EpochState(state.epoch, Frame.ECI, state.position + moon.position,
                          state.velocity + moon.velocity)
    raise FrameError("solar-magnetic states carry no velocity convention; use from_sm_frame")


# --------------------------------------------------------------------------
# Ephemeris sources

class EphemerisSource(Protocol):
    name: str

    def state(self, epoch: Epoch) -> EpochState: ...

    def coverage(self) -> tuple[Epoch, Epoch] | None: ...


@dataclass(frozen=True)
class KeplerEphemeris:
    elements: KeplerianElements
    name: str = "kepler"

    def state(self, epoch: Epoch) -> EpochState:
        return to_eci(kepler_to_state(self.elements, epoch))

    def coverage(self):
        return None


@dataclass(frozen=True)
class SurfaceSite:
    """Fixed point on a spherical Moon, rigidly attached to the Moon-fixed frame."""

    lat_deg: float
    lon_deg: float
    alt_km: float = 0.0
    name: str = "surface"
    elevation_mask_deg: float = 0.0

    def local_position(self) -> np.ndarray:
        lat, lon = math.radians(self.lat_deg), math.radians(self.lon_deg)
        r = R_MOON_KM + self.alt_km
        body = r * np.array([math.cos(lat) * math.cos(lon),
                             math.cos(lat) * math.sin(lon), math.sin(lat)])
        return moon_fixed_rotation() @ body

    def state(self, epoch: Epoch) -> EpochState:
        moon = moon_state(epoch)
        return EpochState(epoch, Frame.ECI, moon.position + self.local_position(), moon.velocity)

    def coverage(self):
        return None


@dataclass(frozen=True)
class TabulatedEphemeris:
    """Sampled states interpolated with 4-point Lagrange polynomials in time."""

    epochs: tuple[Epoch, ...]
    positions: np.ndarray
    velocities: np.ndarray
    frame: Frame = Frame.ECI
    name: str = "table"

    def __post_init__(self):
        if len(self.epochs) < 2:
            raise ValueError("tabulated ephemeris needs at least two samples")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ValueError("ephemeris epochs must be strictly increasing")

    def coverage(self):
        return self.epochs[0], self.epochs[-1]

    def state(self, epoch: Epoch) -> EpochState:
        start, end = self.coverage()
        if epoch < start or epoch > end:
            raise EphemerisGapError(epoch, epoch, self.name)
        offsets = np.array([e - start for e in self.epochs])
        t = epoch - start
        k = int(np.searchsorted(offsets, t))
        lo = min(max(k - 2, 0), max(len(offsets) - 4, 0))
        idx = np.arange(lo, min(lo + 4, len(offsets)))
        w = np.ones(len(idx))
        for a, i in enumerate(idx):
            for j in idx:
                if j != i:
                    w[a] *= (t - offsets[j]) / (offsets[i] - offsets[j])
        pos = w @ self.positions[idx]
        vel = w @ self.velocities[idx]
        return to_eci(EpochState(epoch, self.frame, pos, vel))


EPHEMERIS_HEADER = ["epoch_s", "frame", "x_km", "y_km", "z_km", "vx_kms", "vy_kms", "vz_kms"]


def load_ephemeris_csv(path: str | Path, name: str | None = None) -> TabulatedEphemeris:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != EPHEMERIS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(EPHEMERIS_HEADER)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no samples")
    frames = {Frame.parse(r["frame"]) for r in rows}
    if len(frames) != 1:
        raise ValueError(f"{path}: mixed frames {sorted(f.value for f in frames)}")
    epochs = tuple(Epoch.from_seconds(float(r["epoch_s"])) for r in rows)
    pos = np.array([[float(r[k]) for k in ("x_km", "y_km", "z_km")] for r in rows])
    vel = np.array([[float(r[k]) for k in ("vx_kms", "vy_kms", "vz_kms")] for r in rows])
    return TabulatedEphemeris(epochs, pos, vel, frames.pop(), name or path.stem)


def write_ephemeris_csv(path: str | Path, states: Iterable[EpochState]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPHEMERIS_HEADER)
        for st in states:
            writer.writerow([repr(st.epoch.t), st.frame.value,
                             *(repr(float(v)) for v in st.position),
                             *(repr(float(v)) for v in st.velocity)])


ELEMENT_HEADER = ["name", "a_km", "e", "i_deg", "raan_deg", "argp_deg", "m0_deg", "epoch"]


def load_elements_csv(path: str | Path, gm: float, frame: Frame) -> list[tuple[str, KeplerianElements]]:
    """Read one Keplerian record per satellite (seven element fields plus name)."""
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        missing = set(ELEMENT_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            el = KeplerianElements(
                a=float(row["a_km"]), e=float(row["e"]), i=float(row["i_deg"]),
                raan=float(row["raan_deg"]), argp=float(row["argp_deg"]),
                M0=float(row["m0_deg"]), gm=gm, epoch=Epoch.parse(row["epoch"]),
                frame=frame)
            out.append((row["name"].strip(), el))
    return out


# --------------------------------------------------------------------------
# Light time and geometry

def solve_light_time(rx: EpochState,
                     tx_ephemeris: EphemerisSource | Callable[[Epoch], EpochState],
                     tol: float = 1e-12, max_iter: int = 10,
                     history: list | None = None) -> tuple[Epoch, np.ndarray]:
    """Transmit epoch and transmitter position for a signal received at ``rx``.

    Fixed-point iteration on the light-time equation starting from t_tx = t_rx.
    ``history`` (if given) collects the residual [s] after each iteration.
    """
    rx = to_eci(rx)
    state_fn = getattr(tx_ephemeris, "state", tx_ephemeris)
    coverage = getattr(tx_ephemeris, "coverage", lambda: None)()
    if coverage is not None:
        need_lo, need_hi = rx.epoch + (-3.0), rx.epoch
        if need_lo < coverage[0] or need_hi > coverage[1]:
            raise EphemerisGapError(need_lo, need_hi, getattr(tx_ephemeris, "name", "ephemeris"))
    tau = 0.0
    tx_pos = None
    for _ in range(max_iter):
        tx_pos = to_eci(state_fn(rx.epoch + (-tau))).position
        new_tau = float(np.linalg.norm(rx.position - tx_pos)) / C_KM_S
        residual = abs(new_tau - tau)
        tau = new_tau
        if history is not None:
            history.append(residual)
        if residual < tol:
            break
    tx_pos = to_eci(state_fn(rx.epoch + (-tau))).position
    return rx.epoch + (-tau), tx_pos


def tangential_altitude(r_tx: Sequence[float], r_rx: Sequence[float],
                        body_radius: float = R_EARTH_KM) -> float:
    """Minimum altitude of the straight tx-rx segment above a spherical body."""
    a = np.asarray(r_tx, dtype=float)
    b = np.asarray(r_rx, dtype=float)
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        raise GeometryError("transmitter and receiver coincide")
    t_a = -float(a @ d) / dd
    t_b = float(b @ d) / dd      # same foot measured from the other end
    if 0.0 <= t_a <= 1.0 and 0.0 <= t_b <= 1.0:
        dist = float(np.linalg.norm(np.cross(a, b))) / math.sqrt(dd)
    else:
        dist = min(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return dist - body_radius


def segment_hits_sphere(a: np.ndarray, b: np.ndarray, center: np.ndarray, radius: float) -> bool:
    return tangential_altitude(np.asarray(a) - center, np.asarray(b) - center, radius) < 0.0


def dipole_axis(tilt_deg: float = DEFAULT_DIPOLE_TILT_DEG,
                lon_deg: float = DEFAULT_DIPOLE_LON_DEG) -> np.ndarray:
    t, l = math.radians(tilt_deg), math.radians(lon_deg)
    return np.array([math.sin(t) * math.cos(l), math.sin(t) * math.sin(l), math.cos(t)])


def sm_rotation(sun_dir: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Rows are the SM unit axes expressed in the inertial frame."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    sun = np.asarray(sun_dir, dtype=float)
    x = sun - (sun @ z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-9 * np.linalg.norm(sun):
        raise FrameError("Sun direction is parallel to the dipole axis")
    x = x / nx
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def to_sm_frame(pos: EpochState, axis: np.ndarray | None = None,
                sun_dir: np.ndarray | None = None) -> SmPosition:
    if pos.frame is not Frame.ECI:
        raise FrameError("to_sm_frame expects an earth-centered-inertial state")
    rot = sm_rotation(sun_direction(pos.epoch) if sun_dir is None else sun_dir,
                      dipole_axis() if axis is None else axis)
    x, y, z = rot @ pos.position
    return SmPosition(float(x), float(y), float(z))


def from_sm_frame(sm: SmPosition, epoch: Epoch, axis: np.ndarray | None = None,
                  sun_dir: np.ndarray | None = None) -> EpochState:
    rot = sm_rotation(sun_direction(epoch) if sun_dir is None else sun_dir,
                      dipole_axis() if axis is None else axis)
    return EpochState(epoch, Frame.ECI, rot.T @ sm.as_array())


__all__ = [
    "Epoch", "EpochState", "Frame", "KeplerianElements", "SmPosition",
    "KeplerConvergenceError", "EphemerisGapError", "GeometryError", "FrameError",
    "kepler_to_state", "solve_kepler", "solve_light_time", "tangential_altitude",
    "to_sm_frame", "from_sm_frame", "sm_rotation", "dipole_axis", "sun_direction",
    "moon_position", "moon_state", "to_eci", "KeplerEphemeris", "SurfaceSite",
    "TabulatedEphemeris", "load_ephemeris_csv", "write_ephemeris_csv",
    "load_elements_csv", "GM_EARTH", "GM_MOON",
]
