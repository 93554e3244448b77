"""Squared distance, restricted error / NI gap, and rate fits."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segvi import Ball, Box, Constant, run
from segvi.merit import (CLOSED_FORM, LOGLOG, PROJECTED_ASCENT, SEMILOG, DegenerateFitError,
                         MeritConfig, NonAffineError, NonPositiveValueError, dist_sq, fit_rate,
                         restricted_error, restricted_ni_gap)
from segvi.problems import (linear_problem, make_bilinear, make_quad_quartic,
                            make_strongly_monotone_quadratic)
from segvi.vi_core import SaddleStructure


def _theta_phi():
    """``Phi(theta, phi) = theta * phi`` in one dimension each."""
    return linear_problem(np.array([[0.0, 1.0], [-1.0, 0.0]]), known_solution=np.zeros(2),
                          saddle=SaddleStructure(lambda th, ph: np.sum(th * ph, axis=-1), 1))


def _disc_grid(center, radius, h):
    g = np.arange(-radius, radius + h / 2, h)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[np.sum(pts ** 2, axis=1) <= radius ** 2]
    return pts + center


def _grid_error(M, q, test, center, radius, h):
    pts = _disc_grid(center, radius, h)
    return float(np.max(np.sum((pts @ M.T + q) * (test - pts), axis=1)))


def _random_monotone(rng, d=2):
    A = rng.standard_normal((d, d))
    S = A @ A.T * rng.uniform(0, 1)
    K = rng.standard_normal((d, d))
    return S + (K - K.T), rng.standard_normal(d) * 0.5


def test_dist_sq_examples():
    assert dist_sq([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert dist_sq([3.0, 4.0], [0.0, 0.0]) == 25.0
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(6), rng.standard_normal(6)
    perm = rng.permutation(6)
    assert dist_sq(x[perm], y[perm]) == pytest.approx(dist_sq(x, y), rel=1e-15)
    np.testing.assert_allclose(dist_sq(np.ones((3, 2)), np.zeros(2)), [2.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        dist_sq([1.0], [1.0, 2.0])


def test_merit_config_validation():
    with pytest.raises(ValueError):
        MeritConfig(0.0, [0.0])
    with pytest.raises(ValueError):
        MeritConfig(1.0, [0.0], inner_solver="Newton")
    p = make_strongly_monotone_quadratic(2, 1.0, 2.0)
    cfg = MeritConfig.around_start(p, [3.0, 4.0])
    assert cfg.radius == 10.0
    np.testing.assert_array_equal(cfg.center, [3.0, 4.0])


@pytest.mark.parametrize("solver", [CLOSED_FORM, PROJECTED_ASCENT])
def test_identity_operator_examples(solver):
    p = linear_problem(np.eye(1))
    for R in (0.1, 1.0, 7.0):
        assert restricted_error([0.0], p, MeritConfig(R, [0.0], solver)) == pytest.approx(0.0, abs=1e-12)
    got = restricted_error([0.5], p, MeritConfig(1.0, [0.0], solver))
    xs = np.arange(-1.0, 1.0 + 5e-5, 1e-4)
    grid = float(np.max(xs * (0.5 - xs)))
    assert got == pytest.approx(1 / 16, abs=1e-10)
    assert abs(got - grid) <= 1e-8


def test_closed_form_rejects_nonaffine():
    p = make_quad_quartic(2, 2, 0.0, 1.0)
    with pytest.raises(NonAffineError):
        restricted_error(np.ones(4), p, MeritConfig(1.0, np.zeros(4), CLOSED_FORM))


@pytest.mark.parametrize("seed", range(8))
def test_ascent_and_closed_form_against_grid(seed):
    rng = np.random.default_rng(seed)
    M, q = _random_monotone(rng)
    p = linear_problem(M, q)
    center = rng.standard_normal(2) * 0.3
    R = rng.uniform(0.3, 1.5)
    test = rng.standard_normal(2)
    grid = _grid_error(M, q, test, center, R, 1e-3)
    pa = restricted_error(test, p, MeritConfig(R, center, PROJECTED_ASCENT))
    cf = restricted_error(test, p, MeritConfig(R, center, CLOSED_FORM))
    # grid at spacing h under-approximates by at most |grad| * h
    assert abs(pa - grid) <= 1e-3 * max(1.0, abs(grid))
    assert grid - 1e-9 <= cf <= grid + 1e-2 * max(1.0, abs(grid))
    assert abs(cf - pa) <= 1e-6 * max(1.0, abs(cf))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), d=st.integers(1, 6))
def test_ascent_is_a_lower_bound_on_closed_form(seed, d):
    rng = np.random.default_rng(seed)
    M, q = _random_monotone(rng, d)
    p = linear_problem(M, q)
    center = rng.standard_normal(d)
    test = rng.standard_normal(d)
    R = float(rng.uniform(0.1, 2.0))
    cf = restricted_error(test, p, MeritConfig(R, center, CLOSED_FORM))
    pa = restricted_error(test, p, MeritConfig(R, center, PROJECTED_ASCENT, iters=2000))
    assert pa <= cf + 1e-9 * max(1.0, abs(cf))
    assert cf - pa <= 1e-6 * max(1.0, abs(cf))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_restricted_error_is_convex_in_test_point(seed):
    rng = np.random.default_rng(seed)
    M, q = _random_monotone(rng, 3)
    p = linear_problem(M, q)
    cfg = MeritConfig(1.0, rng.standard_normal(3), CLOSED_FORM)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    mid = restricted_error(0.5 * (a + b), p, cfg)
    ends = 0.5 * (restricted_error(a, p, cfg) + restricted_error(b, p, cfg))
    assert mid <= ends + 1e-9 * max(1.0, abs(ends))


@pytest.mark.parametrize("make", [
    lambda: make_strongly_monotone_quadratic(6, 1.0, 3.0),
    lambda: make_bilinear(3),
    lambda: make_quad_quartic(3, 3, 1.0, 0.0),
    lambda: make_quad_quartic(3, 3, 0.0, 1.0),
])
def test_error_vanishes_at_solution(make):
    p = make()
    cfg = MeritConfig(0.7, p.known_solution + 0.2)
    assert restricted_error(p.known_solution, p, cfg) <= 1e-6


def test_constrained_domain_uses_set_intersection():
    # V = x on the box [0.5, 2]^1, test = 0.5, ball B_1(0): feasible x in [0.5, 1]
    p = linear_problem(np.eye(1), cset=Box([0.5], [2.0]))
    got = restricted_error([0.5], p, MeritConfig(1.0, [0.0]))
    xs = np.linspace(0.5, 1.0, 10001)
    assert got == pytest.approx(float(np.max(xs * (0.5 - xs))), abs=1e-8)


def test_ni_gap_examples():
    p = _theta_phi()
    for solver in (CLOSED_FORM, PROJECTED_ASCENT):
        cfg = MeritConfig(1.0, np.zeros(2), solver)
        assert restricted_ni_gap((np.zeros(1), np.zeros(1)), p, cfg) == pytest.approx(0.0, abs=1e-12)
        assert restricted_ni_gap((np.array([0.5]), np.zeros(1)), p, cfg) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        restricted_ni_gap(np.zeros(2), linear_problem(np.eye(2)), MeritConfig(1.0, np.zeros(2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_ni_gap_nonnegative_when_test_is_admissible(seed):
    rng = np.random.default_rng(seed)
    p = make_quad_quartic(2, 2, 1.0, -1.0, matrix_seed=seed % 5)
    center = rng.standard_normal(4) * 0.2
    test = center + rng.standard_normal(4) * 0.05
    cfg = MeritConfig(0.5, center, iters=50, restarts=4)
    assert restricted_ni_gap(test, p, cfg) >= -1e-12


def test_ni_gap_closed_form_against_grid():
    p = make_bilinear(1, seed=4)
    test = np.array([0.3, -0.6])
    cfg = MeritConfig(0.8, np.array([0.1, 0.1]), CLOSED_FORM)
    pts = _disc_grid(cfg.center, cfg.radius, 1e-3)
    phi = p.saddle.objective
    grid = float(np.max(phi(np.full((len(pts), 1), test[0]), pts[:, 1:])
                        - phi(pts[:, :1], np.full((len(pts), 1), test[1]))))
    assert restricted_ni_gap(test, p, cfg) == pytest.approx(grid, abs=2e-3)


@pytest.mark.parametrize("kind", ["PEG", "RG", "OG"])
def test_ergodic_error_within_deterministic_bound(kind):
    # monotone bilinear problem, deterministic step-size condition, warm start
    p = make_bilinear(3, seed=2)
    L = p.lipschitz
    c = {"PEG": 2.0, "OG": 2.0, "RG": 1 + np.sqrt(2)}[kind]
    gamma = 0.9 / (c * L)
    x0 = np.random.default_rng(3).standard_normal(6) * 0.5
    tr = run(kind, p, None, Constant(gamma), x0, 400, keep_states=True, warm=True,
             record=[1, 3, 10, 30, 100, 400])
    X1 = tr.states[0].base
    X_half = tr.states[0].lead
    R = 2.0 * np.linalg.norm(X1)
    cfg = MeritConfig(R, X1, CLOSED_FORM)
    leads = np.array([s.lead for s in tr.states[1:]])
    for t in tr.metrics.t:
        bound = (R ** 2 + np.sum((X1 - X_half) ** 2)) / (2 * gamma * t)
        err = restricted_error(leads[:t].mean(axis=0), p, cfg)
        assert err <= bound + 1e-6


def test_fit_examples():
    t = np.arange(1, 201, dtype=float)
    f = fit_rate(np.column_stack([t, 5 / t]), LOGLOG, window=(1, 200))
    assert f.slope == pytest.approx(-1.0, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12)
    assert f.intercept == pytest.approx(np.log(5), abs=1e-12)
    f = fit_rate(np.column_stack([t, 3 * np.exp(-0.2 * t)]), SEMILOG)
    assert f.slope == pytest.approx(-0.2, abs=1e-12)


def test_fit_with_second_order_term():
    t = np.logspace(3, 5, 200)
    f = fit_rate(np.column_stack([t, 6 / t + 100 / t ** 2]), LOGLOG, window=(1e3, 1e5))
    # independent: slope of the secant in log-log coordinates
    lo, hi = 6 / 1e3 + 100 / 1e6, 6 / 1e5 + 100 / 1e10
    secant = (np.log(hi) - np.log(lo)) / (np.log(1e5) - np.log(1e3))
    assert -1.02 <= f.slope <= -0.98
    assert abs(f.slope - secant) < 0.01


def test_fit_default_window():
    t = np.arange(1, 1001, dtype=float)
    f = fit_rate(np.column_stack([t, 1 / t]))
    assert f.window == (10.0, 1000.0)
    assert f.n_points == 991
    t = np.arange(1, 51, dtype=float)
    assert fit_rate(np.column_stack([t, 1 / t])).window == (1.0, 50.0)


def test_fit_errors():
    t = np.arange(1, 11, dtype=float)
    with pytest.raises(NonPositiveValueError):
        fit_rate(np.column_stack([t, 1 - t / 5]), window=(1, 10))
    with pytest.raises(ValueError):
        fit_rate([(1, 1.0), (2, 0.5)])
    with pytest.raises(DegenerateFitError):
        fit_rate(np.column_stack([t, np.ones(10)]))
    with pytest.raises(ValueError):
        fit_rate(np.column_stack([t, 1 / t]), scale="loglin")


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100.0), p=st.floats(-3.0, 3.0).filter(lambda v: abs(v) > 1e-3))
def test_fit_recovers_power_laws(a, p):
    t = np.arange(1.0, 301.0)
    f = fit_rate(np.column_stack([t, a * t ** p]))
    assert f.slope == pytest.approx(p, abs=1e-9)
    assert 0.0 <= f.r_squared <= 1.0
