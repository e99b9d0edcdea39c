from __future__ import annotations

import math

import numpy as np
import pytest

from lunardelay.constants import R_EARTH_KM
from lunardelay.media import SpaceWeather, make_medium

GPS_RADIUS = 26560.0
MOON_RANGE = 384400.0


def grazing_geometry(alt_km: float, tx_radius: float = GPS_RADIUS, rx_radius: float = MOON_RANGE,
                     rotation: np.ndarray | None = None):
    """tx/rx pair whose straight chord touches altitude ``alt_km`` between the two ends."""
    rp = R_EARTH_KM + alt_km
    tx = np.array([rp, -math.sqrt(tx_radius ** 2 - rp ** 2), 0.0])
    rx = np.array([rp, math.sqrt(rx_radius ** 2 - rp ** 2), 0.0])
    if rotation is not None:
        tx, rx = rotation @ tx, rotation @ rx
    return tx, rx


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_links(n: int, seed: int, alt_range=(100.0, 20000.0)):
    """``n`` GPS-to-lunar-distance geometries with random tangential altitude and orientation."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        alt = rng.uniform(*alt_range)
        tx_r = rng.uniform(max(GPS_RADIUS, R_EARTH_KM + alt + 1.0), 29600.0)
        out.append(grazing_geometry(alt, tx_r, rng.uniform(370000.0, 405000.0),
                                    random_rotation(rng)))
    return out


@pytest.fixture(scope="session")
def reference_medium():
    return make_medium("reference")


@pytest.fixture(scope="session")
def weather():
    return SpaceWeather(3.0, 167.24)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.REPORT:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.REPORT):
            terminalreporter.write_line(test_acceptance.REPORT[n])
