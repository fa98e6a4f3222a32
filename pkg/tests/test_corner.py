import math

import numpy as np
import pytest

from polylab.cgo import make_probe
from polylab.corner import (
    LEDGER_TERMS,
    ConfigurationError,
    InfiniteVanishingOrder,
    FourierBesselExpansion,
    corner_compatible_field,
    decompose,
    default_tau0,
    expand_on_circle,
    expand_solution_at_vertex,
    integral_identity_ledger,
    moment_vanishing_order,
    sample_circle,
    tau_schedule,
    vanishing_order,
)
from polylab.geometry import ImpedanceParam, corner_frame, regular_polygon, unit_square
from polylab.solver import IncidentWave, Resolution, evaluate_total, solve
from polylab.special import bessel_j


def synthetic(a, b, k=1.0, h=0.5, m=128, n_max=32):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)

    def fn(p):
        r = np.hypot(p[..., 0], p[..., 1])
        th = np.arctan2(p[..., 1], p[..., 0])
        out = np.zeros(r.shape, dtype=complex)
        for n in range(a.size):
            out += bessel_j(n, k * r) * (a[n] * np.exp(1j * n * th) + b[n] * np.exp(-1j * n * th))
        return out

    return expand_on_circle(sample_circle(fn, (0.0, 0.0), h, m), k, h, n_max)


def test_single_mode():
    exp = synthetic([0, 0, 1.0], [0, 0, 0])
    assert abs(exp.a[2] - 1) < 1e-12
    others = np.concatenate([np.delete(exp.a, 2), exp.b])
    assert np.abs(others).max() <= 1e-12


def test_plane_wave_jacobi_anger():
    k, h, phi = 1.0, 0.5, 0.8
    x0 = np.array([0.3, -0.2])
    fn = lambda p: np.exp(1j * k * ((p - x0) @ [math.cos(phi), math.sin(phi)]))  # noqa: E731
    exp = expand_on_circle(sample_circle(fn, x0, h, 128), k, h, 24, center=x0)
    assert abs(exp.a[0] - 1) < 1e-10
    n = np.arange(1, 7)
    assert np.abs(exp.a[1:7] - 1j**n * np.exp(-1j * n * phi)).max() < 1e-10
    assert np.abs(exp.b[1:7] - 1j**n * np.exp(1j * n * phi)).max() < 1e-10
    # higher modes are only as accurate as the samples divided by J_n(kh)
    n = np.arange(1, 20)
    Jn = np.array([bessel_j(int(m), k * h) for m in n])
    assert np.abs((exp.a[1:20] - 1j**n * np.exp(-1j * n * phi)) * Jn).max() < 1e-14


def test_round_trip_on_solver_output():
    K = unit_square()
    sol = solve(K, ImpedanceParam(1.0), IncidentWave(1.0, (1.0, 0.0)), Resolution(12))
    x0 = np.array([1.1, 0.3])
    exp = expand_on_circle(sample_circle(lambda p: evaluate_total(sol, p), x0, 0.3, 128), 1.0, 0.3, 32, center=x0)
    assert exp.residual <= 10 * 1e-10
    pts = x0 + 0.15 * np.array([[1.0, 0.0], [0.0, 1.0], [-0.6, -0.8]])
    assert np.abs(exp.evaluate(pts) - evaluate_total(sol, pts)).max() < 1e-9


def test_expand_rejects_disk_touching_obstacle():
    K = unit_square()
    sol = solve(K, ImpedanceParam(1.0), IncidentWave(1.0, (1.0, 0.0)), Resolution(4))
    fr = corner_frame(K, 0, 0.1)
    with pytest.raises(ConfigurationError):
        expand_solution_at_vertex(sol, fr, 0.1)


@pytest.mark.parametrize("N", [0, 1, 2, 3])
def test_vanishing_order_random_draws(N):
    rng = np.random.default_rng(100 + N)
    failures = 0
    for _ in range(40):
        a = np.zeros(9, dtype=complex)
        b = np.zeros(9, dtype=complex)
        a[N:] = rng.normal(size=9 - N) + 1j * rng.normal(size=9 - N)
        b[N:] = rng.normal(size=9 - N) + 1j * rng.normal(size=9 - N)
        b[0] = 0
        amp = rng.uniform(0.2, 1.0)
        a[N] *= amp / abs(a[N])
        failures += vanishing_order(synthetic(a, b)).N != N
    assert failures == 0


@pytest.mark.parametrize("N", [0, 1, 2, 3])
def test_moment_cross_check(N):
    a = np.zeros(6, dtype=complex)
    a[N:] = 0.8
    exp = synthetic(a, np.zeros(6))
    est, _ = moment_vanishing_order(exp)
    assert est == N == vanishing_order(exp).N


def test_vanishing_order_threshold_examples():
    assert vanishing_order(synthetic([1.0], [0.0])).N == 0
    assert vanishing_order(synthetic([1e-14, 0, 1.0], [0, 0, 0])).N == 2


def test_zero_field_is_infinite_order():
    exp = FourierBesselExpansion(np.zeros(2), 0.5, 1.0, np.zeros(4, complex), np.zeros(4, complex), 0.0)
    with pytest.raises(InfiniteVanishingOrder):
        vanishing_order(exp)


def test_rel_tol_range():
    with pytest.raises(ValueError):
        vanishing_order(synthetic([1.0], [0.0]), rel_tol=0.5)


def test_leading_constant():
    vo = vanishing_order(synthetic([0, 1.0], [0, 0]))
    assert abs(vo.C_N - 0.5) < 1e-12


@pytest.mark.parametrize("N", [0, 1, 2])
def test_remainder_bound(N):
    a = np.zeros(6, dtype=complex)
    a[N] = 1.0
    a[N + 1:] = 0.3
    exp = synthetic(a, np.zeros(6))
    vo = vanishing_order(exp)
    leading, remainder, C_N, R = decompose(exp, N)
    th = np.linspace(0, 2 * math.pi, 64)
    for r in (0.05, 0.2, 0.5):
        assert np.abs(leading(r, th)).max() <= C_N * r**N * (1 + 1e-12)
        assert np.abs(remainder(r, th)).max() <= R * r ** (N + 1) * (1 + 1e-9)
        full = exp.evaluate_polar(np.full_like(th, r), th)
        assert np.allclose(leading(r, th) + remainder(r, th), full, atol=1e-14)
    assert vo.R == R


def test_tau_schedule_example():
    tau, ok = tau_schedule(1, 0.5, 1e-4)
    assert abs(tau - 400.0) < 1e-9
    assert ok
    _, ok = tau_schedule(1, 0.5, 0.9)
    assert not ok


def _degenerate_setup(h=0.2, k=1.0, eta=1.0):
    K = unit_square()
    fr = corner_frame(K, 0, h)
    f = corner_compatible_field(k, eta)
    trace = lambda which, r: f(np.asarray(r)[..., None] * fr.ray(which))  # noqa: E731
    vals = sample_circle(lambda p: f(fr.to_local(p)), fr.vertex, h, 128, fr.rotation)
    exp = expand_on_circle(vals, k, h, 32, fr.vertex, fr.rotation)
    return K, fr, trace, exp


def test_compatible_field_satisfies_condition():
    f = corner_compatible_field(1.0, 0.7)
    d = 1e-6
    for x in (0.1, 0.4):
        p = np.array([[x, 0.0], [x, d], [x, 2 * d]])
        u = f(p)
        dn = -(-3 * u[0] + 4 * u[1] - u[2]) / (2 * d)
        assert abs(dn + 0.7 * u[0]) < 1e-8
        q = np.array([[0.0, x], [d, x], [2 * d, x]])
        u = f(q)
        dn = -(-3 * u[0] + 4 * u[1] - u[2]) / (2 * d)
        assert abs(dn + 0.7 * u[0]) < 1e-8


@pytest.mark.parametrize("fac", [2, 4, 8])
def test_degenerate_ledger_closes(fac):
    K, fr, trace, exp = _degenerate_setup()
    p, cert = make_probe(fac * default_tau0(1.0, 0.2), 1.0, fr)
    led = integral_identity_ledger(trace, exp, fr, 0.2, p, ImpedanceParam(1.0), cert=cert, edge_lengths=K.edge_lengths)
    assert led.residual <= 1e-6
    assert led.all_bounds_ok
    assert abs(led.term("w_flux").value) < 1e-15 and abs(led.term("w_eta0").value) < 1e-15
    assert [t.name for t in led.terms] == list(LEDGER_TERMS)


def test_ledger_residual_grows_when_quadrature_is_coarse():
    K, fr, trace, exp = _degenerate_setup()
    p, cert = make_probe(4 * default_tau0(1.0, 0.2), 1.0, fr)
    res = [
        integral_identity_ledger(trace, exp, fr, 0.2, p, ImpedanceParam(1.0), cert=cert, order=o,
                                 edge_lengths=K.edge_lengths).residual
        for o in (3, 6, 16)
    ]
    assert res[0] > res[1] > res[2]


@pytest.fixture(scope="module")
def square_pentagon():
    inc = IncidentWave(1.0, (1.0, 0.0))
    eta = ImpedanceParam(1.0)
    K = unit_square()
    P = regular_polygon(5, 0.6, 0.3)
    return K, P, solve(K, eta, inc, Resolution(12)), solve(P, eta, inc, Resolution(12))


@pytest.mark.parametrize("fac", [2, 4, 8])
def test_generic_ledger_closes(square_pentagon, fac):
    K, P, sK, sP = square_pentagon
    v = int(np.argmax(P.distance(K.vertices)))
    fr = corner_frame(K, v, 0.1)
    p, cert = make_probe(fac * default_tau0(1.0, 0.1), 1.0, fr)
    led = integral_identity_ledger(sK, sP, fr, 0.1, p, ImpedanceParam(1.0), cert=cert)
    assert led.residual <= 1e-4
    assert led.all_bounds_ok


def test_ledger_csv(tmp_path):
    K, fr, trace, exp = _degenerate_setup()
    p, cert = make_probe(2 * default_tau0(1.0, 0.2), 1.0, fr)
    led = integral_identity_ledger(trace, exp, fr, 0.2, p, ImpedanceParam(1.0), cert=cert, edge_lengths=K.edge_lengths)
    path = tmp_path / "ledger.csv"
    led.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "term_name,re,im,abs,bound,bound_ok"
    assert len(lines) == 2 + len(LEDGER_TERMS)


def test_ledger_rejects_large_kh():
    K, fr, trace, exp = _degenerate_setup()
    p, cert = make_probe(100.0, 6.0, fr)
    with pytest.raises(ConfigurationError):
        integral_identity_ledger(trace, exp, fr, 0.2, p, ImpedanceParam(1.0), cert=cert, edge_lengths=K.edge_lengths)
