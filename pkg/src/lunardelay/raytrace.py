"""Eikonal ray integration and the two-point shooting solver.

Rays are integrated with RK4 in arc length from the transmitter until they
leave the cutoff sphere, then continued as straight lines.  The shooting
solver alternates full integrations (which sample the medium) with a
Nelder-Mead search over the launch azimuth/elevation in which candidate
rays are *replayed* using the direction derivatives stored on the last full
integration, so the medium is never sampled inside the inner search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .constants import R_EARTH_KM
from .frames import GeometryError, tangential_altitude
from .media import (MediumModel, PlasmaSample, SpaceWeather, cos_theta,
                    refractivity_and_gradient)
from .neldermead import nelder_mead

# (upper altitude bound [km], step [km])
DEFAULT_STEP_TABLE: tuple[tuple[float, float], ...] = (
    (1000.0, 10.0), (4000.0, 20.0), (math.inf, 100.0))

MAX_STEPS = 1_000_000


class OccultationError(GeometryError):
    pass


class RunawayError(RuntimeError):
    pass


class NotConvergedError(RuntimeError):
    def __init__(self, miss_m: float):
        super().__init__(f"shooting solve did not converge (miss {miss_m:.3f} m)")
        self.miss_m = miss_m


def step_size(altitude: float, table: Sequence[tuple[float, float]] = DEFAULT_STEP_TABLE) -> float:
    for upper, step in table:
        if altitude < upper:
            return step
    return table[-1][1]


def scaled_step_table(factor: float, table=DEFAULT_STEP_TABLE):
    return tuple((upper, step * factor) for upper, step in table)


@dataclass(frozen=True)
class RaySample:
    s: float
    pos: np.ndarray
    dir: np.ndarray
    dir_deriv: np.ndarray
    plasma: PlasmaSample
    cos_theta: float


@dataclass(frozen=True, eq=False)
class RayPath:
    """Discretized ray from the transmitter to the cutoff-sphere exit.

    Node arrays have N rows; step arrays (``h`` and the three stage
    derivatives ``k1``, ``k2``, ``k4``) have N - 1.  ``k1[j]`` equals the
    node derivative ``dir_deriv[j]``.
    """

    tx_pos: np.ndarray
    initial_dir: np.ndarray
    frequency: float
    s: np.ndarray
    pos: np.ndarray
    dir: np.ndarray
    dir_deriv: np.ndarray
    n_e: np.ndarray
    b_field: np.ndarray
    cos_theta: np.ndarray
    h: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k4: np.ndarray
    s_f: float | None = None

    @property
    def s_exit(self) -> float:
        return float(self.s[-1])

    @property
    def exit_pos(self) -> np.ndarray:
        return self.pos[-1]

    @property
    def exit_dir(self) -> np.ndarray:
        return self.dir[-1]

    @property
    def samples(self) -> list[RaySample]:
        out = []
        for j in range(len(self.s)):
            b = tuple(float(v) for v in self.b_field[j])
            out.append(RaySample(float(self.s[j]), self.pos[j], self.dir[j], self.dir_deriv[j],
                                 PlasmaSample(float(self.n_e[j]), b), float(self.cos_theta[j])))
        return out

    @property
    def is_straight(self) -> bool:
        return not (self.k1.any() or self.k2.any() or self.k4.any())

    def __len__(self):
        return len(self.s)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _far_root(r, s, radius):
    """Distance along s from r to where the line leaves the sphere."""
    b = r[0] * s[0] + r[1] * s[1] + r[2] * s[2]
    c = r[0] * r[0] + r[1] * r[1] + r[2] * r[2] - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return None
    return -b + math.sqrt(disc)


class _Deriv:
    """dŝ/ds = (∇n - ŝ(ŝ·∇n)) / n for one frequency, medium and weather."""

    __slots__ = ("evaluate",)

    def __init__(self, medium, f, weather):
        fast = getattr(medium, "gradient_function", None)
        if fast is not None:
            self.evaluate = fast(weather, f)
        else:
            self.evaluate = lambda r, u: refractivity_and_gradient(medium, r, u, f, weather)

    def __call__(self, r, s):
        sn = math.sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2])
        u = (s[0] / sn, s[1] / sn, s[2] / sn)
        center, chi, g = self.evaluate(r, u)
        if g[0] == 0.0 and g[1] == 0.0 and g[2] == 0.0:
            return center, u, (0.0, 0.0, 0.0)
        n = 1.0 - chi
        gs = g[0] * u[0] + g[1] * u[1] + g[2] * u[2]
        return center, u, ((g[0] - u[0] * gs) / n, (g[1] - u[1] * gs) / n,
                           (g[2] - u[2] * gs) / n)


def _segment_min_altitude(r, s, h):
    b = r[0] * s[0] + r[1] * s[1] + r[2] * s[2]
    rr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    if -h < b < 0.0:
        return math.sqrt(max(rr - b * b, 0.0)) - R_EARTH_KM
    return math.sqrt(rr) - R_EARTH_KM


def integrate_ray(tx_pos, dir0, f: float, medium: MediumModel, weather: SpaceWeather,
                  step_table=DEFAULT_STEP_TABLE, max_steps: int = MAX_STEPS) -> RayPath:
    """RK4-integrate a ray from ``tx_pos`` along ``dir0`` to the cutoff sphere.

    A transmitter outside the cutoff sphere first travels straight to the
    sphere entry point (recorded as one derivative-free step).  The last
    step is shortened so the exit node lies on the cutoff sphere.
    """
    cutoff = medium.cutoff_radius
    deriv = _Deriv(medium, f, weather)
    r = tuple(float(v) for v in tx_pos)
    s = tuple(float(v) for v in _unit(dir0))

    s_list, pos, dirs, dd, ne, bf, ct = [], [], [], [], [], [], []
    hs, k1s, k2s, k4s = [], [], [], []
    zero = (0.0, 0.0, 0.0)

    def record(s_val, r, s, sample, d):
        s_list.append(s_val)
        pos.append(r)
        dirs.append(s)
        dd.append(d)
        ne.append(sample.n_e)
        bf.append(sample.b_field)
        ct.append(cos_theta(sample, s))

    arc = 0.0
    if math.sqrt(r[0] ** 2 + r[1] ** 2 + r[2] ** 2) - R_EARTH_KM < 0.0:
        raise OccultationError("transmitter lies below the Earth's surface")
    if r[0] ** 2 + r[1] ** 2 + r[2] ** 2 >= cutoff * cutoff:
        b = r[0] * s[0] + r[1] * s[1] + r[2] * s[2]
        c = r[0] ** 2 + r[1] ** 2 + r[2] ** 2 - cutoff * cutoff
        disc = b * b - c
        record(0.0, r, s, medium.sample(r, weather), zero)
        if b >= 0.0 or disc <= 0.0:
            return _finish(tx_pos, dir0, f, s_list, pos, dirs, dd, ne, bf, ct, hs, k1s, k2s, k4s)
        t_in = -b - math.sqrt(disc)
        if _segment_min_altitude(r, s, t_in) < 0.0:
            raise OccultationError("ray intersects the Earth before reaching the cutoff sphere")
        hs.append(t_in)
        k1s.append(zero)
        k2s.append(zero)
        k4s.append(zero)
        r = _kernels.advance(*r, *s, t_in, *zero, *zero, *zero)
        s = r[3:]
        r = r[:3]
        arc = t_in
        center, _, a1 = deriv(r, s)
    else:
        center, _, a1 = deriv(r, s)

    for _ in range(max_steps):
        record(arc, r, s, center, a1)
        alt = math.sqrt(r[0] ** 2 + r[1] ** 2 + r[2] ** 2) - R_EARTH_KM
        h = step_size(alt, step_table)
        t_far = _far_root(r, s, cutoff)
        last = t_far is not None and h >= t_far
        if last:
            h = t_far
        if _segment_min_altitude(r, s, h) < 0.0:
            raise OccultationError(f"ray intersects the Earth near s = {arc:.1f} km")
        hh = 0.5 * h
        _, _, a2 = deriv((r[0] + hh * s[0], r[1] + hh * s[1], r[2] + hh * s[2]),
                         (s[0] + hh * a1[0], s[1] + hh * a1[1], s[2] + hh * a1[2]))
        c4 = 0.5 * h * h
        _, _, a4 = deriv((r[0] + h * s[0] + c4 * a2[0], r[1] + h * s[1] + c4 * a2[1],
                          r[2] + h * s[2] + c4 * a2[2]),
                         (s[0] + h * a2[0], s[1] + h * a2[1], s[2] + h * a2[2]))
        nxt = _kernels.advance(*r, *s, h, *a1, *a2, *a4)
        hs.append(h)
        k1s.append(a1)
        k2s.append(a2)
        k4s.append(a4)
        r, s = nxt[:3], nxt[3:]
        arc += h
        center, _, a1 = deriv(r, s)
        if last:
            record(arc, r, s, center, a1)
            return _finish(tx_pos, dir0, f, s_list, pos, dirs, dd, ne, bf, ct, hs, k1s, k2s, k4s)
    raise RunawayError(f"ray did not exit the cutoff sphere within {max_steps} steps")


def _finish(tx_pos, dir0, f, s_list, pos, dirs, dd, ne, bf, ct, hs, k1s, k2s, k4s) -> RayPath:
    def arr(x, cols=3):
        return np.array(x, dtype=float).reshape(-1, cols)

    return RayPath(
        tx_pos=np.array(tx_pos, dtype=float), initial_dir=_unit(dir0), frequency=float(f),
        s=np.array(s_list, dtype=float), pos=arr(pos), dir=arr(dirs), dir_deriv=arr(dd),
        n_e=np.array(ne, dtype=float), b_field=arr(bf), cos_theta=np.array(ct, dtype=float),
        h=np.array(hs, dtype=float), k1=arr(k1s), k2=arr(k2s), k4=arr(k4s))


def straight_nodes(tx_pos, direction, length: float, cutoff: float,
                   step_table=DEFAULT_STEP_TABLE) -> np.ndarray:
    """Arc-length nodes the integrator would use along a straight line.

    Stops at ``length`` or where the line leaves the cutoff sphere,
    whichever comes first; a start outside the sphere jumps to the entry.
    """
    r = np.asarray(tx_pos, dtype=float)
    d = _unit(direction)
    b = float(r @ d)
    c = float(r @ r) - cutoff * cutoff
    disc = b * b - c
    if disc <= 0.0 or -b + math.sqrt(max(disc, 0.0)) <= 0.0:
        return np.array([0.0, length]) if length > 0 else np.array([0.0])
    t_out = min(length, -b + math.sqrt(disc))
    s = 0.0
    nodes = [0.0]
    if c >= 0.0:
        s = -b - math.sqrt(disc)
        if s >= t_out:
            return np.array([0.0, length])
        nodes.append(s)
    while s < t_out:
        p = r + s * d
        h = step_size(math.sqrt(float(p @ p)) - R_EARTH_KM, step_table)
        s = min(s + h, t_out)
        nodes.append(s)
        if len(nodes) > MAX_STEPS:
            raise RunawayError("straight-line node schedule did not terminate")
    if t_out < length:
        nodes.append(length)
    return np.array(nodes)


def vacuum_extension(path: RayPath, rx_pos) -> tuple[float, np.ndarray]:
    """Arc length s_f and the point on the straight exit ray closest to ``rx_pos``."""
    rx = np.asarray(rx_pos, dtype=float)
    ds = float((rx - path.exit_pos) @ path.exit_dir)
    if ds < 0.0:
        raise GeometryError("receiver lies behind the ray exit point")
    return path.s_exit + ds, path.exit_pos + ds * path.exit_dir


def replay_ray(path: RayPath, dir0) -> RayPath:
    """Re-propagate ``path`` from a new launch direction using its stored derivatives."""
    d0 = _unit(dir0)
    n = len(path.s)
    pos = np.empty((n, 3))
    dirs = np.empty((n, 3))
    _kernels.replay_nodes(path.tx_pos, d0, path.h, path.k1, path.k2, path.k4, pos, dirs)
    return replace(path, initial_dir=d0, pos=pos, dir=dirs, s_f=None)


def _replay_terminal(path: RayPath, d0: np.ndarray, rx: np.ndarray) -> np.ndarray:
    if len(path.h) == 0:
        exit_pos, exit_dir = path.tx_pos, d0
    else:
        out = _kernels.replay_exit(path.tx_pos, d0, path.h, path.k1, path.k2, path.k4)
        exit_pos, exit_dir = out[:3], out[3:]
    return exit_pos + float((rx - exit_pos) @ exit_dir) * exit_dir


def chord_displacement(path: RayPath, tx_pos, rx_pos) -> np.ndarray:
    """Perpendicular distance [m] of every path node from the tx-rx chord."""
    tx = np.asarray(tx_pos, dtype=float)
    e = _unit(np.asarray(rx_pos, dtype=float) - tx)
    rel = path.pos - tx
    perp = rel - np.outer(rel @ e, e)
    return np.linalg.norm(perp, axis=1) * 1e3


# --------------------------------------------------------------------------
# Shooting

@dataclass(frozen=True)
class ShootingOptions:
    miss_threshold_m: float = 100.0
    delay_tol_m: float = 1e-3
    max_outer: int = 10
    simplex_scale: float = 5e-4      # rad
    simplex_xtol: float = 1e-9       # rad
    max_inner: int = 200
    stagnation_limit: int = 3
    step_table: tuple = DEFAULT_STEP_TABLE

    def __post_init__(self):
        if self.miss_threshold_m <= 0 or self.delay_tol_m <= 0:
            raise ValueError("thresholds must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be at least 1")
        uppers = [u for u, _ in self.step_table]
        if any(b <= a for a, b in zip(uppers, uppers[1:])) or any(st <= 0 for _, st in self.step_table):
            raise ValueError("step table must have increasing altitudes and positive steps")


@dataclass(frozen=True)
class IterationRecord:
    miss_m: float
    delay_change_m: float        # NaN on the first iteration
    delay_m: float
    accepted: bool


@dataclass(frozen=True, eq=False)
class ShootingResult:
    path: RayPath
    initial_dir: np.ndarray
    miss_distance: float         # m
    outer_iterations: int
    converged: bool
    history: tuple[IterationRecord, ...] = field(default_factory=tuple)
    terminal_pos: np.ndarray | None = None
    stop_reason: str = ""

    @property
    def s_f(self) -> float:
        return self.path.s_f


class _LaunchFrame:
    """Launch direction from (azimuth, elevation) about the LOS polar axis."""

    def __init__(self, los: np.ndarray):
        self.e = los
        trial = np.array([0.0, 0.0, 1.0]) if abs(los[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        self.u = _unit(np.cross(trial, los))
        self.v = np.cross(los, self.u)

    def direction(self, az: float, el: float) -> np.ndarray:
        ce = math.cos(el)
        d = ce * math.cos(az) * self.e + ce * math.sin(az) * self.u + math.sin(el) * self.v
        return d / np.linalg.norm(d)

    def angles(self, d: np.ndarray) -> tuple[float, float]:
        el = math.asin(max(-1.0, min(1.0, float(d @ self.v))))
        az = math.atan2(float(d @ self.u), float(d @ self.e))
        return az, el


def solve_initial_direction(tx_pos, rx_pos, f: float, medium: MediumModel,
                            weather: SpaceWeather,
                            opts: ShootingOptions | None = None) -> ShootingResult:
    """Find the launch direction whose ray reaches ``rx_pos``.

    Outer loop: integrate through the medium, extend through vacuum and
    measure the miss; stop once the launch guess already hits (first pass),
    once the path delay changes by less than ``delay_tol_m`` between passes,
    or at ``max_outer``.  Otherwise run Nelder-Mead on replayed rays to
    update the launch direction.
    """
    from .delays import path_group_delay

    opts = opts or ShootingOptions()
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    if tangential_altitude(tx, rx) <= 0.0:
        raise OccultationError("straight chord intersects the Earth")
    los = _unit(rx - tx)
    frame = _LaunchFrame(los)
    angles = np.zeros(2)
    d0 = los

    history: list[IterationRecord] = []
    best = None
    prev_delay = None
    worse_streak = 0
    converged = False
    reason = "max_outer"
    for k in range(1, opts.max_outer + 1):
        path = integrate_ray(tx, d0, f, medium, weather, opts.step_table)
        s_f, terminal = vacuum_extension(path, rx)
        path = replace(path, s_f=s_f)
        miss = float(np.linalg.norm(terminal - rx)) * 1e3
        delay = path_group_delay(path, terminal)
        change = math.nan if prev_delay is None else abs(delay - prev_delay)
        prev_delay = delay
        accepted = best is None or miss < best[2]
        history.append(IterationRecord(miss, change, delay, accepted))
        if accepted:
            best = (path, d0, miss, terminal)
            worse_streak = 0
        else:
            worse_streak += 1

        if k == 1 and miss < opts.miss_threshold_m:
            converged, reason = True, "miss"
            break
        if change < opts.delay_tol_m:
            converged, reason = True, "delay_stagnation"
            break
        if worse_streak >= opts.stagnation_limit:
            converged, reason = False, "miss_not_decreasing"
            break
        if k == opts.max_outer:
            converged = best[2] < opts.miss_threshold_m
            break

        def objective(x, path=path):
            term = _replay_terminal(path, frame.direction(x[0], x[1]), rx)
            diff = term - rx
            return float(diff @ diff)

        res = nelder_mead(objective, angles, opts.simplex_scale,
                          xtol=opts.simplex_xtol, max_iter=opts.max_inner)
        angles = res.x
        d0 = frame.direction(angles[0], angles[1])

    path, d_best, miss, terminal = best
    return ShootingResult(path=path, initial_dir=d_best, miss_distance=miss,
                          outer_iterations=len(history), converged=converged,
                          history=tuple(history), terminal_pos=terminal, stop_reason=reason)
