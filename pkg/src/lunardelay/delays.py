"""TEC integrals and the five-term group-delay decomposition."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .constants import (Q_COEFF, TEC_DELAY_COEFF, U_DENSITY_COEFF,
                        U_FIELD_COEFF)
from .frames import tangential_altitude
from .media import MediumModel, SpaceWeather
from .raytrace import (DEFAULT_STEP_TABLE, NotConvergedError, OccultationError,
                       RayPath, ShootingResult, scaled_step_table,
                       straight_nodes)

LOS_TEC_RTOL = 1e-4
LOS_TEC_MAX_REFINE = 12


@dataclass(frozen=True)
class DelayBreakdown:
    """Group-delay terms in meters; TEC in e/m^2; p, q, u in SI moments."""

    d_i1_los: float
    d_i2: float
    d_i3: float
    d_i1_bend: float
    d_len: float
    d_total: float
    tec_los: float
    tec_bend: float
    p: float
    q: float
    u: float
    frequency: float = 0.0

    def validate(self, tol: float = 1e-9) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"{f.name} is not finite")
        terms = self.d_i1_los + self.d_i2 + self.d_i3 + self.d_i1_bend + self.d_len
        if abs(self.d_total - terms) > tol:
            raise ValueError("d_total does not equal the sum of its terms")
        if self.d_len < 0.0 or self.tec_los < 0.0:
            raise ValueError("negative bending excess path or line-of-sight TEC")

    def d_i1_at(self, f: float) -> float:
        """First-order delay [m] of the same path at another frequency."""
        return self.p / (f * f)

    def phase_advance(self, f: float | None = None) -> float:
        """Ionospheric phase term [m]; negative, i.e. an advance."""
        f = f or self.frequency
        return -(self.p / f ** 2 + self.q / (2.0 * f ** 3) + self.u / (3.0 * f ** 4))

    def as_dict(self) -> dict:
        return asdict(self)


def _trapezoid(y: np.ndarray, ds: np.ndarray) -> float:
    if len(ds) == 0:
        return 0.0
    return float(np.sum(0.5 * (y[:-1] + y[1:]) * ds))


def path_integrals(path: RayPath) -> tuple[float, float, float]:
    """(tec_path e/m^2, q m·Hz^3, u m·Hz^4) by trapezoid over the path nodes."""
    if len(path.s) < 2:
        raise ValueError("path integrals need at least two samples")
    ds = np.diff(path.s) * 1e3
    ne = path.n_e
    bmag = np.linalg.norm(path.b_field, axis=1)
    tec = _trapezoid(ne, ds)
    q = Q_COEFF * _trapezoid(ne * bmag * path.cos_theta, ds)
    u = (U_DENSITY_COEFF * _trapezoid(ne * ne, ds)
         + U_FIELD_COEFF * _trapezoid(ne * bmag * bmag * (1.0 + path.cos_theta ** 2), ds))
    return tec, q, u


def _chord_tec(tx, direction, length, medium, weather, table) -> float:
    s = straight_nodes(tx, direction, length, medium.cutoff_radius, table)
    ne = np.array([medium.sample(tuple(tx + si * direction), weather).n_e for si in s])
    return _trapezoid(ne, np.diff(s) * 1e3)


def los_tec(tx_pos, rx_pos, medium: MediumModel, weather: SpaceWeather,
            step_table=DEFAULT_STEP_TABLE, rtol: float = LOS_TEC_RTOL) -> float:
    """TEC [e/m^2] along the straight tx-rx chord.

    Uses the integrator's altitude step table; the step is halved until two
    consecutive grids agree to ``rtol`` and the coarser estimate is returned.
    """
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    if tangential_altitude(tx, rx) <= 0.0:
        raise OccultationError("straight chord intersects the Earth")
    chord = rx - tx
    length = float(np.linalg.norm(chord))
    d = chord / length
    table = step_table
    coarse = _chord_tec(tx, d, length, medium, weather, table)
    for _ in range(LOS_TEC_MAX_REFINE):
        table = scaled_step_table(0.5, table)
        fine = _chord_tec(tx, d, length, medium, weather, table)
        if abs(fine - coarse) <= rtol * abs(fine):
            return coarse
        coarse = fine
    return coarse


def excess_path_length(path: RayPath, terminal_pos, tx_pos=None) -> float:
    """Arc length minus chord length [m] of a path ending at ``terminal_pos``.

    Summed step by step as sum of h (1 - ŝ·ê) terms so the result does not
    suffer the cancellation of subtracting two ~4e5 km lengths.
    """
    if path.is_straight:
        return 0.0
    tx = path.tx_pos if tx_pos is None else np.asarray(tx_pos, dtype=float)
    term = np.asarray(terminal_pos, dtype=float)
    e = term - tx
    e /= np.linalg.norm(e)
    dirs = path.dir[:-1]
    diff = dirs - e
    per_step = (path.h * 0.5 * np.einsum("ij,ij->i", diff, diff)
                - (path.h ** 2 / 6.0) * ((path.k1 + 2.0 * path.k2) @ e))
    de = path.exit_dir - e
    tail = float((term - path.exit_pos) @ path.exit_dir) * 0.5 * float(de @ de)
    return max(float(np.sum(per_step)) + tail, 0.0) * 1e3


def path_group_delay(path: RayPath, terminal_pos) -> float:
    """Total group delay [m] of a path: ionospheric terms plus bending excess."""
    f = path.frequency
    if len(path.s) < 2:
        iono = 0.0
    else:
        tec, q, u = path_integrals(path)
        iono = TEC_DELAY_COEFF * tec / f ** 2 + q / f ** 3 + u / f ** 4
    return iono + excess_path_length(path, terminal_pos)


def breakdown(result: ShootingResult, tx_pos, rx_pos, medium: MediumModel,
              weather: SpaceWeather, step_table=DEFAULT_STEP_TABLE) -> DelayBreakdown:
    if not result.converged:
        raise NotConvergedError(result.miss_distance)
    path = result.path
    f = path.frequency
    if len(path.s) >= 2:
        tec_path, q, u = path_integrals(path)
    else:
        tec_path, q, u = 0.0, 0.0, 0.0
    tec_l = los_tec(tx_pos, rx_pos, medium, weather, step_table)
    tec_bend = tec_path - tec_l
    p = TEC_DELAY_COEFF * tec_path
    d_los = TEC_DELAY_COEFF * tec_l / f ** 2
    d_bend = TEC_DELAY_COEFF * tec_bend / f ** 2
    d_i2 = q / f ** 3
    d_i3 = u / f ** 4
    terminal = result.terminal_pos if result.terminal_pos is not None else rx_pos
    d_len = excess_path_length(path, terminal)
    # + 0.0 folds IEEE negative zeros from the field-aligned terms into 0.0
    d_i2 += 0.0
    q += 0.0
    total = d_los + d_i2 + d_i3 + d_bend + d_len
    return DelayBreakdown(d_i1_los=d_los, d_i2=d_i2, d_i3=d_i3, d_i1_bend=d_bend,
                          d_len=d_len, d_total=total, tec_los=tec_l, tec_bend=tec_bend,
                          p=p, q=q, u=u, frequency=f)
