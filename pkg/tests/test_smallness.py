import math

import numpy as np
import pytest

from polylab.geometry import ImpedanceParam, Polygon, eroded_exterior, unit_square
from polylab.smallness import (
    DiskChain,
    DisconnectedRegionError,
    ScheduleError,
    annulus_error,
    audit_chain,
    beta_bracket,
    boundary_propagation_experiment,
    build_chain,
    difference_field,
    disk_points,
    eps1_ceiling_neglog,
    fit_three_sphere,
    outgoing_source,
    plane_wave_superposition,
    propagate,
    radius_schedule,
    three_sphere_check,
)
from polylab.geometry import corner_frame
from polylab.solver import IncidentWave, Resolution, solve


def test_disk_points_are_inside():
    p = disk_points((0.3, -0.2), 0.1)
    assert np.all(np.hypot(p[:, 0] - 0.3, p[:, 1] + 0.2) <= 0.1 * (1 + 1e-12))
    assert len(p) > 10000


def test_plane_wave_superposition_solves_helmholtz():
    fld = plane_wave_superposition(2.0, 10, np.random.default_rng(1))
    assert fld.helmholtz_residual(np.array([0.1, 0.2])) < 1e-5
    assert fld.sup((0.0, 0.0), 0.4) <= 1 + 1e-12


def test_outgoing_source_solves_helmholtz():
    fld = outgoing_source(1.0, (3.0, 0.0))
    assert fld.helmholtz_residual(np.array([0.2, 0.1])) < 1e-5


def test_beta_bracket_inside_unit_interval():
    lo, hi = beta_bracket(0.1, 0.4, 0.3, 0.5)
    assert 0 < lo < hi < 1


def test_three_sphere_sups_are_ordered():
    fld = plane_wave_superposition(1.0, 20, np.random.default_rng(3))
    res = three_sphere_check(fld, (0.0, 0.0), 0.1, 0.2, 0.4, 0.3)
    m1, m2, m3 = res.sups
    assert m1 <= m2 <= m3
    assert res.holds(res.C)
    assert not res.holds(0.5 * res.C)


def test_fit_validates_on_held_out_fields():
    fit = fit_three_sphere(1.0, seed=7, n_train=40, n_valid=20)
    assert fit.n_pass >= 19
    assert 0 < fit.beta < 1
    assert fit.chain_constant >= 1


def test_straight_corridor_chain():
    K = Polygon([[-0.2, -1.5], [0.2, -1.5], [0.2, -1.2], [-0.2, -1.2]])
    g = eroded_exterior([K], 0.2, (-2, 2, -2, 2))
    ch = build_chain(g, (-1.0, 0.5), (1.0, 0.5), 0.05)
    assert abs(ch.d_gamma - 2.0) < 2 * g.step
    assert np.abs(ch.centers[:, 1] - 0.5).max() < 1e-9
    assert ch.audit["ok"]


def test_chain_routes_around_square():
    K = unit_square()
    r = 0.02
    g = eroded_exterior([K], 4 * r, (-2, 2, -2, 2))
    ch = build_chain(g, (-1.2, 0.0), (1.2, 0.0), r, r_m=0.11)
    assert ch.d_gamma > 2.4
    clear = K.boundary_distance(ch.centers)
    assert clear.min() > 3 * r
    assert audit_chain(ch, [K], r_m=0.11)["ok"]


def test_chain_too_large_radius():
    A = Polygon([[-0.3, -2.0], [0.3, -2.0], [0.3, -0.05], [-0.3, -0.05]])
    B = Polygon([[-0.3, 0.05], [0.3, 0.05], [0.3, 2.0], [-0.3, 2.0]])
    g = eroded_exterior([A, B], 0.1, (-2, 2, -2, 2))
    with pytest.raises(DisconnectedRegionError):
        build_chain(g, (-1.0, 0.0), (1.0, 0.0), 0.025)


def test_chain_csv(tmp_path):
    g = eroded_exterior([unit_square()], 0.2, (-2, 2, -2, 2))
    ch = build_chain(g, (-1.2, 1.0), (1.2, 1.0), 0.05)
    p = tmp_path / "c.csv"
    ch.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "index,cx,cy" and len(lines) == ch.n + 1


def test_propagation_zero_length():
    fld = plane_wave_superposition(1.0, 20, np.random.default_rng(5))
    c = np.array([[0.5, 0.5]])
    ch = DiskChain(c, 0.05, 0.0)
    res = propagate(fld, ch, 1.0, 2.0, 0.3)
    assert res.exponent == pytest.approx(0.3)
    assert res.bound == pytest.approx(2.0 * res.m0**0.3)


def test_propagation_bound_is_monotone_in_start_smallness():
    g = eroded_exterior([unit_square()], 0.2, (-2, 2, -2, 2))
    ch = build_chain(g, (-1.2, 1.0), (-0.6, 1.0), 0.05)
    fld = plane_wave_superposition(1.0, 20, np.random.default_rng(6))
    b1 = propagate(fld, ch, 1.0, 2.0, 0.3).bound
    b2 = propagate(fld.scaled(0.1), ch, 1.0, 2.0, 0.3).bound
    assert b2 < b1


def test_radius_schedule_example():
    r, _ = radius_schedule(None, 2.0, 0.5, 0.5, neg_log_eps1=40 * math.log(10))
    assert r == pytest.approx(2 * math.log(2) / (0.5 * math.log(40 * math.log(10))), rel=1e-14)
    assert r > 0


def test_radius_schedule_ceiling():
    cap = 0.1
    nl = eps1_ceiling_neglog(2.0, 0.5, 0.5, cap)
    r, at = radius_schedule(None, 2.0, 0.5, 0.5, r_m=cap, neg_log_eps1=nl)
    assert at and 4 * r == pytest.approx(cap)
    with pytest.raises(ScheduleError):
        radius_schedule(None, 2.0, 0.5, 0.5, r_m=cap, neg_log_eps1=nl / 2)


def test_identical_obstacles_give_zero_difference():
    K = unit_square()
    inc = IncidentWave(1.0, (1.0, 0.0))
    s = solve(K, ImpedanceParam(1.0), inc, Resolution(4))
    w = difference_field(s, s)
    err, _ = annulus_error(w, 2.0, 0.5, n_centers=2, n_rad=3, n_ang=32)
    assert err == 0.0
    fr = corner_frame(K, 0, 0.1)
    bp = boundary_propagation_experiment(s, s, fr, 0.1, eps=0.0, n_edge=8)
    assert bp.sup_w == 0.0 and bp.sup_grad_w == 0.0
