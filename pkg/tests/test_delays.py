from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lunardelay.constants import FREQ_L1, FREQ_L5, R_EARTH_KM
from lunardelay.delays import (DelayBreakdown, breakdown, excess_path_length, los_tec,
                               path_integrals)
from lunardelay.media import SphericalMedium, VacuumMedium, phase_index
from lunardelay.raytrace import (NotConvergedError, OccultationError, RayPath,
                                 ShootingOptions, integrate_ray, scaled_step_table,
                                 solve_initial_direction, vacuum_extension)

from .conftest import grazing_geometry, random_links

VAC = VacuumMedium()


def synthetic_path(n_e, b_field, cos_t, length_km=1000.0, n=101, f=FREQ_L1):
    s = np.linspace(0.0, length_km, n)
    pos = np.column_stack([np.full(n, 7000.0), s, np.zeros(n)])
    dirs = np.tile([0.0, 1.0, 0.0], (n, 1))
    zeros = np.zeros((n - 1, 3))
    return RayPath(tx_pos=pos[0], initial_dir=dirs[0], frequency=f, s=s, pos=pos, dir=dirs,
                   dir_deriv=np.zeros((n, 3)), n_e=np.full(n, float(n_e)),
                   b_field=np.tile(b_field, (n, 1)).astype(float), cos_theta=np.full(n, cos_t),
                   h=np.diff(s), k1=zeros, k2=zeros, k4=zeros)


@pytest.fixture(scope="module")
def solved(reference_medium, weather):
    tx, rx = grazing_geometry(200.0)
    out = {}
    for f in (FREQ_L1, FREQ_L5):
        res = solve_initial_direction(tx, rx, f, reference_medium, weather)
        out[f] = (res, breakdown(res, tx, rx, reference_medium, weather))
    return out, tx, rx


def test_uniform_slab_integrals():
    tec, q, u = path_integrals(synthetic_path(1e12, (0.0, 0.0, 0.0), 0.0))
    assert tec == pytest.approx(1e18, rel=1e-12)
    assert q == 0.0
    assert u == pytest.approx(2437.0 * 1e24 * 1e6, rel=1e-12)


def test_field_parity():
    a = path_integrals(synthetic_path(1e12, (0.0, 4e-5, 0.0), 0.7))
    b = path_integrals(synthetic_path(1e12, (0.0, -4e-5, 0.0), -0.7))
    assert a[1] == -b[1] and a[1] != 0.0
    assert a[2] == b[2]
    assert a[1] == pytest.approx(-2.2566e12 * 1e12 * 4e-5 * 0.7 * 1e6, rel=1e-12)
    assert a[2] == pytest.approx(2.437e33 + 4.74e22 * 1e12 * 1.6e-9 * 1.49 * 1e6, rel=1e-12)


def test_vacuum_integrals_zero():
    assert path_integrals(synthetic_path(0.0, (0.0, 0.0, 0.0), 0.0)) == (0.0, 0.0, 0.0)


def test_path_integrals_need_two_samples():
    p = synthetic_path(1e12, (0, 0, 0), 0.0)
    short = replace(p, s=p.s[:1], n_e=p.n_e[:1])
    with pytest.raises(ValueError):
        path_integrals(short)


def test_los_tec_vacuum(weather):
    tx, rx = grazing_geometry(300.0)
    assert los_tec(tx, rx, VAC, weather) == 0.0


def test_los_tec_radial_shell(weather):
    def shell(r):
        h = r - R_EARTH_KM
        return 1e11 if 300.0 <= h < 800.0 else 0.0

    med = SphericalMedium(profile=shell)
    tx = np.array([R_EARTH_KM + 205.0, 0.0, 0.0])
    rx = np.array([R_EARTH_KM + 905.0, 0.0, 0.0])
    assert los_tec(tx, rx, med, weather) == pytest.approx(5e16, rel=1e-4)


def test_los_tec_smooth_profile_exact(weather):
    # linear density in radius integrates exactly under the trapezoid rule
    med = SphericalMedium(profile=lambda r: 1e8 * (r - R_EARTH_KM), cutoff_radius=20000.0)
    tx = np.array([R_EARTH_KM + 100.0, 0.0, 0.0])
    rx = np.array([R_EARTH_KM + 3100.0, 0.0, 0.0])
    want = 1e8 * 0.5 * (3100.0 ** 2 - 100.0 ** 2) * 1e3
    assert los_tec(tx, rx, med, weather) == pytest.approx(want, rel=1e-12)


def test_los_tec_matches_straight_path(reference_medium, weather):
    tx, rx = grazing_geometry(350.0)
    straight = solve_initial_direction(tx, rx, FREQ_L1, VAC, weather).path
    ne = np.array([reference_medium.sample(tuple(p), weather).n_e for p in straight.pos])
    resampled = replace(straight, n_e=ne)
    assert path_integrals(resampled)[0] == pytest.approx(
        los_tec(tx, rx, reference_medium, weather), rel=1e-6)


def test_los_tec_refines_to_tolerance(reference_medium, weather):
    tx, rx = grazing_geometry(150.0)
    a = los_tec(tx, rx, reference_medium, weather)
    b = los_tec(tx, rx, reference_medium, weather, scaled_step_table(0.125))
    assert abs(a - b) <= 2e-4 * b


def test_los_tec_occulted(weather):
    with pytest.raises(OccultationError):
        los_tec((26560.0, 0.0, 0.0), (-384400.0, 0.0, 0.0), VAC, weather)


def test_first_order_arithmetic():
    d_l1 = 40.3 * 1e18 / FREQ_L1 ** 2
    d_l5 = 40.3 * 1e18 / FREQ_L5 ** 2
    assert d_l1 == pytest.approx(16.237, abs=5e-4)
    assert d_l5 == pytest.approx(29.118, abs=5e-4)
    assert d_l1 / d_l5 == pytest.approx(0.5576, abs=5e-5)


def test_vacuum_breakdown_all_zero(weather):
    tx, rx = grazing_geometry(500.0)
    res = solve_initial_direction(tx, rx, FREQ_L1, VAC, weather)
    d = breakdown(res, tx, rx, VAC, weather)
    for name in ("d_i1_los", "d_i2", "d_i3", "d_i1_bend", "d_len", "d_total",
                 "tec_los", "tec_bend", "p", "q", "u"):
        assert getattr(d, name) == 0.0, name
        assert math.copysign(1.0, getattr(d, name)) == 1.0


def test_breakdown_invariants(solved):
    for _, d in solved[0].values():
        d.validate()
        assert d.d_total == pytest.approx(d.d_i1_los + d.d_i2 + d.d_i3 + d.d_i1_bend + d.d_len,
                                          abs=1e-9)
        assert d.d_len >= 0.0 and d.tec_los > 0.0
        assert d.p == pytest.approx(40.3 * (d.tec_los + d.tec_bend), rel=1e-12)


def test_frequency_law(solved):
    _, d = solved[0][FREQ_L1]
    ratio = d.d_i1_at(FREQ_L1) / d.d_i1_at(FREQ_L5)
    assert ratio == pytest.approx((FREQ_L5 / FREQ_L1) ** 2, rel=1e-12)
    assert d.d_i1_at(FREQ_L1) == pytest.approx(d.d_i1_los + d.d_i1_bend, rel=1e-12)
    assert d.q / FREQ_L1 ** 3 == d.d_i2
    assert d.u / FREQ_L1 ** 4 == pytest.approx(d.d_i3, rel=1e-15)


def test_frequency_ordering(solved):
    out = solved[0]
    assert out[FREQ_L5][1].d_len >= out[FREQ_L1][1].d_len >= 0.0


def test_higher_order_small(solved):
    for _, d in solved[0].values():
        assert d.d_i1_los > 0.1
        assert (abs(d.d_i2) + abs(d.d_i3)) / d.d_i1_los < 0.01


def test_phase_advance(solved):
    _, d = solved[0][FREQ_L1]
    f = FREQ_L1
    assert d.phase_advance() == pytest.approx(
        -(d.p / f ** 2 + d.q / (2 * f ** 3) + d.u / (3 * f ** 4)), rel=1e-15)
    assert d.phase_advance() < 0


def test_d_len_against_arc_minus_chord(solved):
    # arc length of the integrated path is the sum of its steps; compare with the chord
    for res, d in solved[0].values():
        chord = float(np.linalg.norm(res.terminal_pos - res.path.tx_pos))
        direct = (math.fsum(res.path.h) + (res.path.s_f - res.path.s_exit) - chord) * 1e3
        assert d.d_len == pytest.approx(direct, abs=1e-6)


def test_d_len_zero_for_straight(weather):
    p = integrate_ray((7000.0, 0.0, 0.0), (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    assert excess_path_length(p, p.exit_pos + 5e4 * p.exit_dir) == 0.0


def test_fermat_stationarity(solved, reference_medium, weather):
    # the converged ray should not be beaten by a nearby smooth deformation with the same ends
    res, _ = solved[0][FREQ_L1]
    p = res.path
    nodes = np.vstack([p.pos, res.terminal_pos])
    chord = nodes[-1] - nodes[0]
    normal = np.cross(chord, [0.0, 0.0, 1.0])
    normal /= np.linalg.norm(normal)
    binormal = np.cross(chord / np.linalg.norm(chord), normal)
    s = np.append(p.s, p.s_f)
    f = p.frequency

    def optical(pts):
        n = np.array([phase_index(reference_medium.sample(tuple(x), weather), (0, 1, 0), f)
                      if np.linalg.norm(x) < reference_medium.cutoff_radius else 1.0
                      for x in pts])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return float(np.sum(seg * 0.5 * (n[:-1] + n[1:]))) * 1e3

    base = optical(nodes)
    bump = np.sin(np.pi * np.clip(s / p.s_exit, 0.0, 1.0))[:, None]
    for amp in (0.5, -0.5, 2.0):
        for axis in (normal, binormal):
            assert optical(nodes + amp * bump * axis) >= base - 1e-3


def test_quadrature_refinement(reference_medium, weather):
    tx, rx = grazing_geometry(300.0)
    coarse_res = solve_initial_direction(tx, rx, FREQ_L1, reference_medium, weather)
    coarse = breakdown(coarse_res, tx, rx, reference_medium, weather)
    table = scaled_step_table(0.5)
    fine_res = solve_initial_direction(tx, rx, FREQ_L1, reference_medium, weather,
                                       ShootingOptions(step_table=table))
    fine = breakdown(fine_res, tx, rx, reference_medium, weather, table)
    for name in ("d_i1_los", "d_i2", "d_i3", "d_i1_bend", "d_len"):
        a, b = getattr(coarse, name), getattr(fine, name)
        assert abs(a - b) <= max(1e-3 * abs(b), 1e-4), name


def test_not_converged_raises(reference_medium, weather):
    tx, rx = grazing_geometry(200.0)
    res = solve_initial_direction(tx, rx, FREQ_L5, reference_medium, weather,
                                  ShootingOptions(max_outer=1))
    assert not res.converged
    with pytest.raises(NotConvergedError) as exc:
        breakdown(res, tx, rx, reference_medium, weather)
    assert exc.value.miss_m == res.miss_distance


def test_validate_rejects_inconsistent_total():
    d = DelayBreakdown(1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1e16, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        d.validate()
    with pytest.raises(ValueError):
        DelayBreakdown(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1e16, 0.0, 1.0, 0.0, 0.0).validate()


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_links_consistent(seed, reference_medium, weather):
    tx, rx = random_links(1, seed, (100.0, 8000.0))[0]
    res = solve_initial_direction(tx, rx, FREQ_L1, reference_medium, weather)
    if not res.converged:
        return
    d = breakdown(res, tx, rx, reference_medium, weather)
    d.validate()
    assert d.d_len >= 0.0
    s_f, term = vacuum_extension(res.path, rx)
    assert s_f == pytest.approx(res.path.s_f)
