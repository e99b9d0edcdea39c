"""Electron density media, refractive indices and solar-activity relations.

A medium is anything with ``sample(position, weather) -> PlasmaSample`` and a
``cutoff_radius`` beyond which it is treated as vacuum.  Positions are
earth-centred inertial km.  Three media ship here: :class:`VacuumMedium`,
:class:`SphericalMedium` (radially stratified, field-free; useful for checks)
and :class:`ReferenceMedium`, an analytic ionosphere/plasmasphere stand-in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np

from . import _medium_kernels as _mk
from .constants import ELECTRON_CHARGE, ELECTRON_MASS, EPSILON_0, R_EARTH_KM
from .frames import Epoch, dipole_axis, sun_direction

# f_p^2 = PLASMA_FREQ_SQ_COEFF * n_e
PLASMA_FREQ_SQ_COEFF = ELECTRON_CHARGE ** 2 / (4.0 * math.pi ** 2 * EPSILON_0 * ELECTRON_MASS)
GYRO_FREQ_COEFF = ELECTRON_CHARGE / (2.0 * math.pi * ELECTRON_MASS)

DEFAULT_CUTOFF_RADIUS_KM = 4.0 * R_EARTH_KM


@dataclass(frozen=True)
class SpaceWeather:
    kp: float
    r12: float
    epoch: Epoch = Epoch(0)

    def __post_init__(self):
        if not 0.0 <= self.kp <= 9.0:
            raise ValueError(f"kp must lie in [0, 9], got {self.kp}")
        if not 0.0 <= self.r12 <= 300.0:
            raise ValueError(f"r12 must lie in [0, 300], got {self.r12}")


@dataclass(frozen=True)
class SolarIndices:
    f107: float
    ig12: float


class PlasmaSample(NamedTuple):
    n_e: float                               # electrons / m^3
    b_field: tuple[float, float, float]      # tesla


VACUUM_SAMPLE = PlasmaSample(0.0, (0.0, 0.0, 0.0))


class MediumModel(Protocol):
    cutoff_radius: float

    def sample(self, position: Sequence[float], weather: SpaceWeather) -> PlasmaSample: ...


def solar_indices_from_r12(r12: float) -> SolarIndices:
    """F10.7 and IG12 from the 12-month smoothed sunspot number."""
    if r12 < 0:
        raise ValueError("r12 must be non-negative")
    f107 = 63.75 + 0.728 * r12 + 0.00089 * r12 ** 2
    ig12 = -12.349154 + 1.4683266 * r12 - 0.00267690893 * r12 ** 2
    return SolarIndices(f107, ig12)


def plasma_frequency(n_e: float) -> float:
    return math.sqrt(PLASMA_FREQ_SQ_COEFF * n_e)


def gyro_frequency(b_mag: float) -> float:
    return GYRO_FREQ_COEFF * b_mag


def _magnetic_terms(sample: PlasmaSample, ray_dir) -> tuple[float, float]:
    bx, by, bz = sample.b_field
    b = math.sqrt(bx * bx + by * by + bz * bz)
    if b == 0.0:
        return 0.0, 0.0
    dx, dy, dz = ray_dir
    dn = math.sqrt(dx * dx + dy * dy + dz * dz)
    return GYRO_FREQ_COEFF * b, (bx * dx + by * dy + bz * dz) / (b * dn)


def phase_refractivity(sample: PlasmaSample, ray_dir, f: float) -> float:
    """1 - n, evaluated without forming n so small values keep full precision."""
    if sample.n_e == 0.0:
        return 0.0
    fp2 = PLASMA_FREQ_SQ_COEFF * sample.n_e
    fg, cos_t = _magnetic_terms(sample, ray_dir)
    f2 = f * f
    return (fp2 / (2.0 * f2) + fp2 * fg * cos_t / (2.0 * f2 * f)
            + fp2 / (4.0 * f2 * f2) * (fp2 / 2.0 + fg * fg * (1.0 + cos_t * cos_t)))


def group_refractivity(sample: PlasmaSample, ray_dir, f: float) -> float:
    """n_gr - 1."""
    if sample.n_e == 0.0:
        return 0.0
    fp2 = PLASMA_FREQ_SQ_COEFF * sample.n_e
    fg, cos_t = _magnetic_terms(sample, ray_dir)
    f2 = f * f
    return (fp2 / (2.0 * f2) + fp2 * fg * cos_t / (f2 * f)
            + 3.0 * fp2 / (4.0 * f2 * f2) * (fp2 / 2.0 + fg * fg * (1.0 + cos_t * cos_t)))


def phase_index(sample: PlasmaSample, ray_dir, f: float) -> float:
    return 1.0 - phase_refractivity(sample, ray_dir, f)


def group_index(sample: PlasmaSample, ray_dir, f: float) -> float:
    return 1.0 + group_refractivity(sample, ray_dir, f)


def cos_theta(sample: PlasmaSample, ray_dir) -> float:
    return _magnetic_terms(sample, ray_dir)[1]


def gradient_step(radius_km: float) -> float:
    return max(0.1, 1e-4 * (radius_km - R_EARTH_KM))


def _local_frame(px: float, py: float, pz: float, r: float):
    ux, uy, uz = px / r, py / r, pz / r
    # first tangent: u x z_hat, or u x x_hat near the poles
    if abs(uz) < 0.9:
        tx, ty, tz = uy, -ux, 0.0
    else:
        tx, ty, tz = 0.0, uz, -uy
    tn = math.sqrt(tx * tx + ty * ty + tz * tz)
    tx, ty, tz = tx / tn, ty / tn, tz / tn
    sx, sy, sz = uy * tz - uz * ty, uz * tx - ux * tz, ux * ty - uy * tx
    return (ux, uy, uz), (tx, ty, tz), (sx, sy, sz)


def refractivity_and_gradient(medium: MediumModel, pos, ray_dir, f: float,
                              weather: SpaceWeather):
    """Central sample, 1 - n there, and grad(n) [1/km].

    Differences are taken along a local radial/tangential triad so that
    radially stratified media yield purely radial gradients.
    """
    px, py, pz = pos
    center = medium.sample(pos, weather)
    chi0 = phase_refractivity(center, ray_dir, f)
    r = math.sqrt(px * px + py * py + pz * pz)
    if r >= medium.cutoff_radius + gradient_step(r):
        return center, chi0, (0.0, 0.0, 0.0)
    d = gradient_step(r)
    gx = gy = gz = 0.0
    for ax, ay, az in _local_frame(px, py, pz, r):
        plus = medium.sample((px + d * ax, py + d * ay, pz + d * az), weather)
        minus = medium.sample((px - d * ax, py - d * ay, pz - d * az), weather)
        # grad n = -grad(1 - n)
        deriv = (phase_refractivity(minus, ray_dir, f)
                 - phase_refractivity(plus, ray_dir, f)) / (2.0 * d)
        gx += deriv * ax
        gy += deriv * ay
        gz += deriv * az
    return center, chi0, (gx, gy, gz)


def index_gradient(medium: MediumModel, pos, ray_dir, f: float,
                   weather: SpaceWeather) -> np.ndarray:
    """Central finite-difference gradient of the phase index [1/km]."""
    fast = getattr(medium, "gradient_function", None)
    if fast is not None:
        return np.array(fast(weather, f)(pos, ray_dir)[2])
    return np.array(refractivity_and_gradient(medium, pos, ray_dir, f, weather)[2])


# --------------------------------------------------------------------------
# Media

@dataclass(frozen=True)
class VacuumMedium:
    cutoff_radius: float = DEFAULT_CUTOFF_RADIUS_KM

    def sample(self, position, weather) -> PlasmaSample:
        return VACUUM_SAMPLE


def chapman_profile(h: float, nm: float, hm: float, scale_height: float) -> float:
    z = (h - hm) / scale_height
    return nm * math.exp(0.5 * (1.0 - z - math.exp(-z)))


@dataclass(frozen=True)
class SphericalMedium:
    """Field-free medium whose density depends on radius only.

    Default profile: Chapman layer plus an r^-4 tail, tapered to zero at
    the cutoff radius.
    """

    nm: float = 1e12
    hm: float = 300.0
    scale_height: float = 60.0
    tail_density: float = 5e10       # e/m^3 at 1000 km altitude
    cutoff_radius: float = DEFAULT_CUTOFF_RADIUS_KM
    profile: Callable[[float], float] | None = None

    def density(self, r: float) -> float:
        if r >= self.cutoff_radius:
            return 0.0
        if self.profile is not None:
            return self.profile(r)
        h = r - R_EARTH_KM
        ne = chapman_profile(h, self.nm, self.hm, self.scale_height)
        join = 0.5 * (1.0 + math.tanh((h - 1000.0) / 100.0))
        ne += join * self.tail_density * ((R_EARTH_KM + 1000.0) / r) ** 4
        return ne * _taper(r, self.cutoff_radius, 0.125 * self.cutoff_radius)

    def sample(self, position, weather) -> PlasmaSample:
        x, y, z = position
        return PlasmaSample(self.density(math.sqrt(x * x + y * y + z * z)), (0.0, 0.0, 0.0))

    def gradient_function(self, weather: SpaceWeather, f: float):
        """Radial-only differencing; exact for a stratified medium."""
        coeff = PLASMA_FREQ_SQ_COEFF / (2.0 * f * f)
        quart = PLASMA_FREQ_SQ_COEFF ** 2 / (8.0 * f ** 4)

        def chi(ne):
            return coeff * ne + quart * ne * ne

        def evaluate(pos, ray_dir):
            px, py, pz = pos
            r = math.sqrt(px * px + py * py + pz * pz)
            ne = self.density(r)
            center = PlasmaSample(ne, (0.0, 0.0, 0.0))
            if r >= self.cutoff_radius + gradient_step(r):
                return center, chi(ne), (0.0, 0.0, 0.0)
            d = gradient_step(r)
            deriv = (chi(self.density(r - d)) - chi(self.density(r + d))) / (2.0 * d * r)
            return center, chi(ne), (deriv * px, deriv * py, deriv * pz)

        return evaluate


def _taper(r: float, cutoff: float, width: float) -> float:
    r0 = cutoff - width
    if r <= r0:
        return 1.0
    if r >= cutoff:
        return 0.0
    t = (r - r0) / width
    return 1.0 - t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class ReferenceParams:
    """Constants of the analytic reference medium (overridable from config)."""

    nm: float = 1.0e12                 # Chapman peak density at F10.7 = 63.75 [e/m^3]
    hm: float = 300.0                  # peak height [km]
    scale_height: float = 60.0         # [km]
    n1: float = 1.0e26                 # plasmasphere coefficient [e/m^3 km^4]
    trough_floor: float = 1.0e7        # [e/m^3]
    dipole_strength: float = 3.12e-5   # surface equatorial field [T]
    lpp_a: float = 5.6                 # plasmapause L = lpp_a - lpp_b * kp
    lpp_b: float = 0.46
    lpp_width: float = 0.1             # tanh width in L
    join_altitude: float = 1000.0      # ionosphere/plasmasphere join [km]
    join_width: float = 100.0
    night_factor: float = 0.2
    solar_coeff: float = 0.004         # per sfu above 63.75
    cutoff_radius: float = DEFAULT_CUTOFF_RADIUS_KM
    taper_width: float = 0.5 * R_EARTH_KM
    dipole_tilt_deg: float = 11.5
    dipole_lon_deg: float = -72.7

    def __post_init__(self):
        positive = ("nm", "hm", "scale_height", "n1", "trough_floor", "dipole_strength",
                    "lpp_width", "join_width", "cutoff_radius", "taper_width")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"medium parameter {name} must be positive")
        if not 0.0 <= self.night_factor <= 1.0:
            raise ValueError("night_factor must lie in [0, 1]")
        if self.taper_width >= self.cutoff_radius - R_EARTH_KM:
            raise ValueError("taper_width must be smaller than the cutoff altitude")


@lru_cache(maxsize=256)
def _weather_terms(params: ReferenceParams, weather: SpaceWeather):
    f107 = solar_indices_from_r12(weather.r12).f107
    solar = 1.0 + params.solar_coeff * (f107 - 63.75)
    sun = tuple(float(v) for v in sun_direction(weather.epoch))
    lpp = params.lpp_a - params.lpp_b * weather.kp
    return solar, sun, lpp


@dataclass(frozen=True)
class ReferenceMedium:
    """Chapman ionosphere + dipole-aligned plasmasphere with a Kp plasmapause.

    The plasmasphere density N1 (R_E L)^-4 is constant along dipole field
    lines, falls off through a tanh plasmapause to a trough floor, and joins
    the ionospheric topside around ``join_altitude``.  Both the Chapman peak
    and the plasmasphere scale linearly with F10.7.  Total density is tapered
    to exactly zero at the cutoff radius.
    """

    params: ReferenceParams = field(default_factory=ReferenceParams)

    @property
    def cutoff_radius(self) -> float:
        return self.params.cutoff_radius

    @property
    def axis(self) -> tuple[float, float, float]:
        return _axis_tuple(self.params.dipole_tilt_deg, self.params.dipole_lon_deg)

    def plasmapause_l(self, kp: float) -> float:
        return self.params.lpp_a - self.params.lpp_b * kp

    def plasmasphere_density(self, l_shell: float, weather: SpaceWeather) -> float:
        """Plasmasphere/trough term as a function of L only."""
        p = self.params
        solar, _, lpp = _weather_terms(p, weather)
        if math.isinf(l_shell):
            return p.trough_floor
        inside = 0.5 * (1.0 - math.tanh((l_shell - lpp) / p.lpp_width))
        dens = p.n1 * solar / (R_EARTH_KM * l_shell) ** 4
        return dens * inside + p.trough_floor * (1.0 - inside)

    def chapman_density(self, h: float, cos_zenith: float, weather: SpaceWeather) -> float:
        p = self.params
        solar = _weather_terms(p, weather)[0]
        day = p.night_factor + (1.0 - p.night_factor) * (0.5 * (1.0 + cos_zenith)) ** 2
        return chapman_profile(h, p.nm * solar * day, p.hm, p.scale_height)

    def magnetic_field(self, position) -> tuple[float, float, float]:
        x, y, z = position
        mx, my, mz = self.axis
        r2 = x * x + y * y + z * z
        r = math.sqrt(r2)
        k = self.params.dipole_strength * (R_EARTH_KM / r) ** 3
        mr = 3.0 * (mx * x + my * y + mz * z) / r2
        return (k * (mx - mr * x), k * (my - mr * y), k * (mz - mr * z))

    def l_shell(self, position) -> float:
        x, y, z = position
        mx, my, mz = self.axis
        r = math.sqrt(x * x + y * y + z * z)
        s = (mx * x + my * y + mz * z) / r
        c2 = 1.0 - s * s
        if c2 <= 1e-15:
            return math.inf
        return r / (R_EARTH_KM * c2)

    def constants(self, weather: SpaceWeather) -> np.ndarray:
        """Packed constants for the compiled kernels at this weather point."""
        p = self.params
        solar, sun, lpp = _weather_terms(p, weather)
        return _mk.pack_constants(p, self.axis, solar, sun, lpp)

    def sample(self, position, weather: SpaceWeather) -> PlasmaSample:
        x, y, z = position
        ne, bx, by, bz = _mk.sample(float(x), float(y), float(z), _packed(self.params, weather))
        return PlasmaSample(ne, (bx, by, bz))

    def gradient_function(self, weather: SpaceWeather, f: float):
        """Compiled equivalent of ``refractivity_and_gradient`` for one (weather, f)."""
        c = self.constants(weather)
        grad = _mk.gradient

        def evaluate(pos, ray_dir):
            ne, bx, by, bz, chi, gx, gy, gz = grad(
                pos[0], pos[1], pos[2], ray_dir[0], ray_dir[1], ray_dir[2], f, c,
                PLASMA_FREQ_SQ_COEFF, GYRO_FREQ_COEFF)
            return PlasmaSample(ne, (bx, by, bz)), chi, (gx, gy, gz)

        return evaluate


@lru_cache(maxsize=256)
def _packed(params: ReferenceParams, weather: SpaceWeather) -> np.ndarray:
    solar, sun, lpp = _weather_terms(params, weather)
    c = _mk.pack_constants(params, _axis_tuple(params.dipole_tilt_deg, params.dipole_lon_deg),
                           solar, sun, lpp)
    c.setflags(write=False)
    return c


@lru_cache(maxsize=64)
def _axis_tuple(tilt: float, lon: float) -> tuple[float, float, float]:
    return tuple(float(v) for v in dipole_axis(tilt, lon))


def make_medium(kind: str = "reference", **overrides) -> MediumModel:
    """Build a medium by name; ``overrides`` set ReferenceParams fields."""
    if kind == "vacuum":
        return VacuumMedium(**overrides)
    if kind == "reference":
        return ReferenceMedium(ReferenceParams(**overrides))
    if kind == "spherical":
        return SphericalMedium(**overrides)
    raise ValueError(f"unknown medium kind {kind!r}")
