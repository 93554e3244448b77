"""Benchmark problem zoo."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segvi import Ball, MonotonicityClass, check_regular_solution, probe_lipschitz, probe_monotonicity
from segvi.merit import MeritConfig, restricted_error
from segvi.problems import (QuadQuarticSaddle, make_bilinear, make_quad_quartic,
                            make_strongly_monotone_quadratic, zero_problem)

REGIMES = [(1.0, 0.0), (0.0, 1.0), (1.0, -1.0)]


def _hand_operator(src, x):
    """Operator written out block by block from the matrices."""
    th, ph = x[: src.d1], x[src.d1:]
    qa = th @ src.A2 @ th
    qb = ph @ src.B2 @ ph
    g_th = 4 * src.eps1 * src.A1 @ th + 4 * src.eps2 * qa * (src.A2 @ th) + 4 * src.C @ ph
    g_ph = 4 * src.eps1 * src.B1 @ ph + 4 * src.eps2 * qb * (src.B2 @ ph) - 4 * src.C.T @ th
    return np.concatenate([g_th, g_ph])


@pytest.mark.parametrize("eps", REGIMES)
def test_origin_is_critical(eps):
    p = make_quad_quartic(4, 3, *eps)
    np.testing.assert_array_equal(p.operator(np.zeros(7)), np.zeros(7))
    assert p.saddle.objective(np.zeros(4), np.zeros(3)) == 0.0
    np.testing.assert_array_equal(p.known_solution, np.zeros(7))


@pytest.mark.parametrize("eps", REGIMES)
def test_operator_matches_block_formula(eps):
    p = make_quad_quartic(5, 4, *eps, matrix_seed=3)
    src = p.info["source"]
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 9))
    want = np.array([_hand_operator(src, x) for x in X])
    np.testing.assert_allclose(p.operator(X), want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("eps", REGIMES)
def test_operator_is_saddle_gradient(eps):
    # central differences of Phi against (grad_theta Phi, -grad_phi Phi)
    p = make_quad_quartic(3, 4, *eps, matrix_seed=1)
    d1, phi = p.saddle.d1, p.saddle.objective
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(100):
        x = rng.standard_normal(7)
        E = h * np.eye(7)
        f = lambda z: phi(z[..., :d1], z[..., d1:])
        g = (f(x + E) - f(x - E)) / (2 * h)
        g[d1:] *= -1
        v = p.operator(x)
        assert np.linalg.norm(g - v) <= 1e-5 * max(1.0, np.linalg.norm(v))


def test_blocks_are_spd_and_seeded():
    a = make_quad_quartic(6, 5, 1.0, -1.0, matrix_seed=9).info["source"]
    b = make_quad_quartic(6, 5, 1.0, -1.0, matrix_seed=9).info["source"]
    for name in ("A1", "A2", "B1", "B2"):
        m = getattr(a, name)
        np.testing.assert_array_equal(m, m.T)
        assert np.linalg.eigvalsh(m)[0] >= 0.5 - 1e-12  # conditioning floor
        np.testing.assert_array_equal(m, getattr(b, name))
    c = make_quad_quartic(6, 5, 1.0, -1.0, matrix_seed=10).info["source"]
    assert not np.allclose(a.A1, c.A1)


def test_construction_errors():
    with pytest.raises(ValueError):
        make_quad_quartic(0, 3, 1.0, 0.0)
    with pytest.raises(ValueError):
        make_quad_quartic(2, 2, 1.0, 0.0, conditioning=0.0)
    with pytest.raises(ValueError):
        QuadQuarticSaddle(np.eye(2), -np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)), 1, 0)
    with pytest.raises(ValueError):
        make_strongly_monotone_quadratic(3, 2.0, 1.0)
    with pytest.raises(ValueError):
        make_bilinear(0)


def test_strongly_monotone_regime_is_linear():
    p = make_quad_quartic(4, 4, 1.0, 0.0, matrix_seed=2)
    src = p.info["source"]
    J = np.block([[4 * src.A1, 4 * src.C], [-4 * src.C.T, 4 * src.B1]])
    x = np.random.default_rng(0).standard_normal((5, 8))
    np.testing.assert_allclose(p.operator(x), x @ J.T, rtol=1e-12, atol=1e-12)
    modulus = 4 * min(np.linalg.eigvalsh(src.A1)[0], np.linalg.eigvalsh(src.B1)[0])
    lo, _ = probe_monotonicity(p, 4000, 0, Ball(np.zeros(8), 3.0))
    assert lo >= modulus - 1e-6
    assert p.strong_mono == pytest.approx(modulus, rel=1e-12)
    assert p.lipschitz == pytest.approx(np.linalg.norm(J, 2), rel=1e-12)


def test_monotone_quartic_regime():
    p = make_quad_quartic(4, 4, 0.0, 1.0)
    lo, _ = probe_monotonicity(p, 20000, 1, Ball(np.zeros(8), 10.0))
    assert lo >= -1e-6


@pytest.mark.parametrize("eps", REGIMES)
def test_declared_class_is_consistent_with_probes(eps):
    p = make_quad_quartic(5, 5, *eps, matrix_seed=4)
    lo, _ = probe_monotonicity(p, 20000, 2, Ball(np.zeros(10), 5.0))
    cls = p.monotonicity_class
    if cls is MonotonicityClass.STRONGLY_MONOTONE:
        assert lo > 0
    elif cls is MonotonicityClass.MONOTONE:
        assert lo >= -1e-6
    else:
        assert cls is MonotonicityClass.NON_MONOTONE_REGULAR
        assert lo < 0


def test_nonmonotone_regime_has_regular_origin():
    p = make_quad_quartic(5, 5, 1.0, -1.0)
    rep = check_regular_solution(p, np.zeros(10), 0.3)
    assert rep.min_symmetric_eigenvalue > 0


@pytest.mark.parametrize("eps", [(0.0, 1.0), (1.0, -1.0)])
def test_regional_lipschitz_bound_dominates_probe(eps):
    for radius in (0.3, 1.0, 2.0):
        p = make_quad_quartic(4, 4, *eps, lipschitz_radius=radius)
        est = probe_lipschitz(p, 5000, 0, Ball(np.zeros(8), radius))
        assert est <= p.lipschitz + 1e-9
        assert p.lipschitz_radius == radius


def test_strongly_monotone_quadratic_examples():
    p = make_strongly_monotone_quadratic(1, 1.0, 1.0)
    np.testing.assert_allclose(p.operator(np.array([2.5])), [2.5])
    p = make_strongly_monotone_quadratic(8, 0.5, 4.0, seed=3)
    Q = p.info["matrix"]
    sym = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    assert sym[0] == pytest.approx(0.5, rel=1e-10)
    assert np.linalg.norm(Q, 2) <= 4.0 + 1e-9
    # random pairs approach the bottom eigenvector slowly in high dimension
    small = make_strongly_monotone_quadratic(4, 0.5, 4.0, seed=3)
    lo, _ = probe_monotonicity(small, 20000, 0, Ball(np.zeros(4), 1.0))
    assert 0.5 - 1e-9 <= lo <= 0.5 * 1.02
    assert probe_lipschitz(p, 20000, 0, Ball(np.zeros(8), 1.0)) <= p.lipschitz + 1e-9
    np.testing.assert_array_equal(p.known_solution, np.zeros(8))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), dim=st.integers(1, 5))
def test_bilinear_operator_is_skew(seed, dim):
    p = make_bilinear(dim, seed=seed)
    x = np.random.default_rng(seed).standard_normal(2 * dim)
    assert abs(p.operator(x) @ x) <= 1e-12 * max(1.0, x @ x)


def test_bilinear_probes_and_solution():
    p = make_bilinear(3, seed=1)
    lo, hi = probe_monotonicity(p, 2000, 0, Ball(np.zeros(6), 2.0))
    assert abs(lo) <= 1e-9 and abs(hi) <= 1e-9
    assert p.strong_mono == 0.0
    cfg = MeritConfig(1.0, np.full(6, 0.1))
    assert abs(restricted_error(np.zeros(6), p, cfg)) <= 1e-9
    shifted = make_bilinear(2, cset=Ball(np.full(4, 5.0), 1.0))
    assert shifted.known_solution is None


def test_zero_problem_solution():
    np.testing.assert_array_equal(zero_problem(3).known_solution, np.zeros(3))
    assert zero_problem(2, Ball(np.full(2, 4.0), 1.0)).known_solution is None
