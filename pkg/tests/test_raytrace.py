from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lunardelay.constants import FREQ_L1, FREQ_L5, R_EARTH_KM
from lunardelay.frames import GeometryError
from lunardelay.media import SphericalMedium, VacuumMedium, phase_refractivity
from lunardelay.raytrace import (DEFAULT_STEP_TABLE, OccultationError, RunawayError,
                                 ShootingOptions, _LaunchFrame, _replay_terminal,
                                 chord_displacement, integrate_ray, replay_ray,
                                 scaled_step_table, solve_initial_direction, step_size,
                                 straight_nodes, vacuum_extension)

from .conftest import grazing_geometry

VAC = VacuumMedium()


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="module")
def solved_200(reference_medium, weather):
    tx, rx = grazing_geometry(200.0)
    return {f: solve_initial_direction(tx, rx, f, reference_medium, weather)
            for f in (FREQ_L1, FREQ_L5)}, tx, rx


def test_step_table():
    assert step_size(0.0) == 10.0
    assert step_size(999.9) == 10.0
    assert step_size(1000.0) == 20.0
    assert step_size(3999.0) == 20.0
    assert step_size(4000.0) == 100.0
    assert step_size(1e6) == 100.0
    assert scaled_step_table(0.5)[0] == (1000.0, 5.0)


def test_vacuum_ray_is_straight(weather):
    tx = np.array([7000.0, 1000.0, -500.0])
    d = unit([0.3, 1.0, 0.2])
    p = integrate_ray(tx, d, FREQ_L1, VAC, weather)
    assert not p.dir_deriv.any()
    assert p.is_straight
    assert np.linalg.norm(p.exit_pos - (tx + p.s_exit * d)) < 1e-6
    assert np.linalg.norm(p.exit_pos) == pytest.approx(VAC.cutoff_radius, abs=1e-6)


def test_ray_into_earth_is_occulted(weather):
    tx = np.array([26560.0, 0.0, 0.0])
    with pytest.raises(OccultationError):
        integrate_ray(tx, -unit(tx), FREQ_L1, VAC, weather)


def test_transmitter_underground_rejected(weather):
    with pytest.raises(OccultationError):
        integrate_ray((6000.0, 0.0, 0.0), (1.0, 0.0, 0.0), FREQ_L1, VAC, weather)


def test_runaway_step_limit(weather):
    with pytest.raises(RunawayError):
        integrate_ray((7000.0, 0.0, 0.0), (0.0, 1.0, 0.0), FREQ_L1, VAC, weather, max_steps=5)


def test_outside_cutoff_enters_straight(reference_medium, weather):
    tx, rx = grazing_geometry(300.0, tx_radius=29600.0)
    p = integrate_ray(tx, unit(rx - tx), FREQ_L1, reference_medium, weather)
    entry = p.pos[1]
    assert np.linalg.norm(entry) == pytest.approx(reference_medium.cutoff_radius, rel=1e-12)
    assert not p.k1[0].any()


def test_outside_cutoff_missing_sphere(weather):
    tx = np.array([30000.0, 0.0, 0.0])
    p = integrate_ray(tx, (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    assert len(p) == 1 and p.s_exit == 0.0


def test_bouguer_invariant(weather):
    med = SphericalMedium()
    start = np.array([R_EARTH_KM + 250.0, 0.0, 0.0])
    zenith = math.radians(80.0)
    p = integrate_ray(start, (math.cos(zenith), math.sin(zenith), 0.0), FREQ_L1, med, weather)
    inv = np.array([(1 - phase_refractivity(s.plasma, s.dir, FREQ_L1))
                    * np.linalg.norm(np.cross(s.pos, s.dir)) for s in p.samples])
    assert p.dir_deriv.any()
    assert np.ptp(inv) / inv.mean() < 1e-5


def test_path_invariants(solved_200, reference_medium):
    for res in solved_200[0].values():
        p = res.path
        assert np.max(np.abs(np.linalg.norm(p.dir, axis=1) - 1.0)) < 1e-9
        assert np.all(np.diff(p.s) > 0)
        assert np.linalg.norm(p.exit_pos) >= reference_medium.cutoff_radius - 1.0
        assert p.s_f >= p.s_exit
        assert p.s_exit == p.samples[-1].s
        np.testing.assert_array_equal(p.k1, p.dir_deriv[:-1])


# -- vacuum extension -------------------------------------------------------

def test_extension_collinear(weather):
    p = integrate_ray((7000.0, 0.0, 0.0), (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    rx = p.exit_pos + 1e5 * p.exit_dir
    s_f, term = vacuum_extension(p, rx)
    assert np.linalg.norm(term - rx) < 1e-9
    assert s_f == pytest.approx(p.s_exit + 1e5)


def test_extension_perpendicular_offset(weather):
    p = integrate_ray((7000.0, 0.0, 0.0), (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    rx = p.exit_pos + 1e5 * p.exit_dir + np.array([0.0, 0.0, 1.0])
    _, term = vacuum_extension(p, rx)
    assert np.linalg.norm(term - rx) == pytest.approx(1.0, abs=1e-9)


def test_extension_behind_exit(weather):
    p = integrate_ray((7000.0, 0.0, 0.0), (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    with pytest.raises(GeometryError):
        vacuum_extension(p, p.exit_pos - 10.0 * p.exit_dir)


def test_extension_residual_orthogonal(reference_medium, weather):
    rng = np.random.default_rng(4)
    tx, rx = grazing_geometry(400.0)
    p = integrate_ray(tx, unit(rx - tx), FREQ_L1, reference_medium, weather)
    for _ in range(20):
        target = rx + rng.normal(scale=500.0, size=3)
        _, term = vacuum_extension(p, target)
        assert abs((term - target) @ p.exit_dir) < 1e-9


# -- replay -----------------------------------------------------------------

def test_replay_identity(solved_200):
    p = solved_200[0][FREQ_L1].path
    q = replay_ray(p, p.initial_dir)
    np.testing.assert_array_equal(q.pos, p.pos)
    np.testing.assert_array_equal(q.dir, p.dir)
    np.testing.assert_array_equal(q.dir_deriv, p.dir_deriv)


def test_replay_vacuum_rotated(weather):
    tx = np.array([7000.0, 0.0, 0.0])
    p = integrate_ray(tx, (0.0, 1.0, 0.0), FREQ_L1, VAC, weather)
    d = unit([0.1, 1.0, 0.05])
    q = replay_ray(p, d)
    rel = q.pos - tx
    perp = rel - np.outer(rel @ d, d)
    assert np.max(np.linalg.norm(perp, axis=1)) < 1e-9
    np.testing.assert_allclose(q.dir, np.tile(d, (len(q), 1)), atol=1e-15)


def _replay_ratio(res, tx, rx, f, medium, weather, az, el):
    d1 = _LaunchFrame(res.initial_dir).direction(az, el)
    full = integrate_ray(tx, d1, f, medium, weather)
    _, t_full = vacuum_extension(full, rx)
    t_replay = _replay_terminal(res.path, d1, rx)
    return np.linalg.norm(t_replay - t_full) / np.linalg.norm(t_full - res.terminal_pos)


def test_replay_tracks_out_of_plane_perturbation(solved_200, reference_medium, weather):
    res_map, tx, rx = solved_200
    for f, res in res_map.items():
        for el in (1e-4, -1e-4):
            assert _replay_ratio(res, tx, rx, f, reference_medium, weather, 0.0, el) < 0.01


@pytest.mark.xfail(strict=True, reason="frozen derivatives ignore the change in bending with "
                   "tangent height; in-plane error is 3-7% of the terminal shift at 200 km")
def test_replay_tracks_in_plane_perturbation(solved_200, reference_medium, weather):
    res_map, tx, rx = solved_200
    res = res_map[FREQ_L1]
    for az in (1e-4, -1e-4):
        assert _replay_ratio(res, tx, rx, FREQ_L1, reference_medium, weather, az, 0.0) < 0.01


def test_replay_high_tangent_accurate(reference_medium, weather):
    tx, rx = grazing_geometry(3000.0)
    res = solve_initial_direction(tx, rx, FREQ_L5, reference_medium, weather)
    for az, el in ((1e-4, 0.0), (0.0, -1e-4)):
        assert _replay_ratio(res, tx, rx, FREQ_L5, reference_medium, weather, az, el) < 0.01


# -- shooting ---------------------------------------------------------------

def test_vacuum_shooting(weather):
    tx, rx = grazing_geometry(500.0)
    res = solve_initial_direction(tx, rx, FREQ_L1, VAC, weather)
    assert res.converged and res.outer_iterations == 1
    assert res.miss_distance < 1e-3
    np.testing.assert_allclose(res.initial_dir, unit(rx - tx), atol=1e-15)
    assert res.s_f == pytest.approx(np.linalg.norm(rx - tx), abs=1e-6)


def test_occulted_chord(weather):
    tx = np.array([26560.0, 0.0, 0.0])
    with pytest.raises(OccultationError):
        solve_initial_direction(tx, -tx * 14.0, FREQ_L1, VAC, weather)


def test_first_iteration_miss_tens_of_km(reference_medium, weather):
    tx, rx = grazing_geometry(100.0)
    p = integrate_ray(tx, unit(rx - tx), FREQ_L1, reference_medium, weather)
    _, term = vacuum_extension(p, rx)
    assert 10.0 <= np.linalg.norm(term - rx) <= 100.0


def test_shooting_200km(solved_200):
    res = solved_200[0][FREQ_L1]
    assert res.converged and res.outer_iterations <= 6
    assert res.miss_distance < 100.0
    first_small = next(k for k, h in enumerate(res.history, 1) if h.delay_change_m < 1e-3)
    assert first_small <= 4
    assert res.history[0].miss_m > 1e4


def test_accepted_miss_monotone(solved_200):
    for res in solved_200[0].values():
        accepted = [h.miss_m for h in res.history if h.accepted]
        assert all(b < a for a, b in zip(accepted, accepted[1:]))
        assert res.miss_distance == min(h.miss_m for h in res.history)


def test_l5_bends_more(solved_200):
    res_map, tx, rx = solved_200
    l1, l5 = res_map[FREQ_L1], res_map[FREQ_L5]
    assert l5.outer_iterations >= l1.outer_iterations
    assert chord_displacement(l5.path, tx, rx).max() > chord_displacement(l1.path, tx, rx).max()


def test_max_displacement_near_lowest_point(solved_200):
    res_map, tx, rx = solved_200
    for res in res_map.values():
        p = res.path
        j = int(np.argmax(chord_displacement(p, tx, rx)))
        m = int(np.argmin(np.linalg.norm(p.pos, axis=1)))
        assert abs(p.s[j] - p.s[m]) <= 0.2 * p.s_exit


def test_chord_displacement_vacuum(weather):
    tx, rx = grazing_geometry(800.0)
    res = solve_initial_direction(tx, rx, FREQ_L1, VAC, weather)
    assert np.max(chord_displacement(res.path, tx, rx)) < 1e-6


def test_deterministic(reference_medium, weather):
    tx, rx = grazing_geometry(600.0)
    a = solve_initial_direction(tx, rx, FREQ_L5, reference_medium, weather)
    b = solve_initial_direction(tx, rx, FREQ_L5, reference_medium, weather)
    assert a.history == b.history
    np.testing.assert_array_equal(a.initial_dir, b.initial_dir)
    np.testing.assert_array_equal(a.path.pos, b.path.pos)


def test_stagnation_stops_non_converged(reference_medium, weather):
    tx, rx = grazing_geometry(200.0)
    opts = ShootingOptions(max_inner=1, simplex_scale=1e-9, delay_tol_m=1e-12)
    res = solve_initial_direction(tx, rx, FREQ_L5, reference_medium, weather, opts)
    assert not res.converged
    assert res.stop_reason in ("miss_not_decreasing", "max_outer")


def test_refinement(solved_200, reference_medium, weather):
    from lunardelay.constants import TEC_DELAY_COEFF
    from lunardelay.delays import path_integrals
    res_map, tx, _ = solved_200
    for f, res in res_map.items():
        fine = integrate_ray(tx, res.initial_dir, f, reference_medium, weather,
                             scaled_step_table(0.5))
        assert abs(fine.s_exit - res.path.s_exit) < 1e-3
        d1 = TEC_DELAY_COEFF * path_integrals(res.path)[0] / f ** 2
        d2 = TEC_DELAY_COEFF * path_integrals(fine)[0] / f ** 2
        assert abs(d1 - d2) < 1e-3


def test_options_validation():
    with pytest.raises(ValueError):
        ShootingOptions(miss_threshold_m=0)
    with pytest.raises(ValueError):
        ShootingOptions(max_outer=0)
    with pytest.raises(ValueError):
        ShootingOptions(step_table=((1000.0, 10.0), (500.0, 20.0)))


def test_straight_nodes_match_integrator(weather):
    tx = np.array([7000.0, 0.0, 0.0])
    d = np.array([0.0, 1.0, 0.0])
    p = integrate_ray(tx, d, FREQ_L1, VAC, weather)
    nodes = straight_nodes(tx, d, 1e9, VAC.cutoff_radius, DEFAULT_STEP_TABLE)
    np.testing.assert_allclose(nodes[:-1], p.s, rtol=0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0.0, math.pi), phi=st.floats(0.0, 2 * math.pi),
       r=st.floats(R_EARTH_KM + 100.0, 20000.0))
def test_vacuum_random_directions_straight(theta, phi, r):
    from lunardelay.media import SpaceWeather
    tx = np.array([r, 0.0, 0.0])
    d = np.array([math.cos(theta), math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi)])
    try:
        p = integrate_ray(tx, d, FREQ_L1, VAC, SpaceWeather(3.0, 100.0))
    except OccultationError:
        b = float(tx @ d)
        assert b < 0 and r * r - b * b < R_EARTH_KM ** 2
        return
    assert np.linalg.norm(p.exit_pos - (tx + p.s_exit * d)) < 1e-6
    assert np.max(np.abs(np.linalg.norm(p.dir, axis=1) - 1)) < 1e-12
