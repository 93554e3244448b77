"""Lemma, recurrence and descent checks."""
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segvi import Ball, Constant, run
from segvi.problems import make_bilinear, make_strongly_monotone_quadratic, zero_problem
from segvi.verify import (InequalityReport, chung_sequence, check_chung_recurrence,
                          check_descent_along_run, check_lemma_four_point,
                          check_lemma_three_point, descent_taus)


def _overshoot(c, v):
    # a deliberately wrong "projection" that overshoots the true one
    p = c.project(v)
    return p + 0.05 * (p - v) + 0.01


def test_three_point_whole_space_is_an_identity():
    rep = check_lemma_three_point(2000, seed=1, set_kind="whole")
    assert rep.worst_slack >= -1e-12
    assert abs(rep.worst_slack) <= 1e-12 * 1e3


@pytest.mark.parametrize("kind", ["ball", "box", None])
def test_three_point_has_no_violations(kind):
    rep = check_lemma_three_point(10_000, seed=2, set_kind=kind, tol=1e-9)
    assert rep.ok, str(rep)
    assert rep.trials == 10_000


def test_three_point_detects_a_broken_projection():
    rep = check_lemma_three_point(2000, seed=0, set_kind="ball", project=_overshoot)
    assert not rep.ok
    assert rep.witness is not None and rep.witness["margin"] < 0


@pytest.mark.parametrize("part", ["A", "B"])
def test_four_point_has_no_violations(part):
    rep = check_lemma_four_point(10_000, seed=3, part=part, tol=1e-9)
    assert rep.ok, str(rep)


def test_four_point_detects_a_broken_projection():
    rep = check_lemma_four_point(2000, seed=0, part="B", project=_overshoot)
    assert not rep.ok
    with pytest.raises(ValueError):
        check_lemma_four_point(1, part="C")


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_four_point_equal_inputs_reduce_to_three_point(seed):
    # y1 = y2 and C1 = C2: x2+ = x1+, the cross term vanishes and both forms
    # collapse to the three-point inequality, evaluated independently here
    rng = np.random.default_rng(seed)
    c = Ball(rng.standard_normal(4), 0.2 + rng.random())
    x, y = 3 * rng.standard_normal(4), 3 * rng.standard_normal(4)
    p = c.sample(rng, 1)[0]
    xp = c.project(x - y)
    margin = (np.sum((x - p) ** 2) - 2 * y @ (xp - p) - np.sum((xp - x) ** 2)) - np.sum((xp - p) ** 2)
    assert margin >= -1e-9


def test_report_merge_and_str():
    a = InequalityReport("x", 10, 0, -1e-13, [1])
    b = InequalityReport("x", 5, 2, -1.0, [2], witness={"t": 3})
    m = a.merge(b)
    assert (m.trials, m.violations, m.worst_slack, m.seeds) == (15, 2, -1.0, [1, 2])
    assert m.witness == {"t": 3}
    assert str(a).startswith("PASS") and str(m).startswith("FAIL")


def _chung_closed_form(t):
    # q = 2, b = 1, c' = 1, a_1 = 0 with equality: t a_t = (t - H_t) / (t - 1)
    H = np.cumsum(1.0 / np.arange(1, t.max() + 1))[t.astype(int) - 1]
    return (t - H) / (t - 1)


def test_chung_sequence_matches_closed_form():
    a = chung_sequence(2.0, 1.0, 1.0, 0.0, 5000)
    t = np.arange(2, 5001, dtype=float)
    np.testing.assert_allclose(t * a[1:], _chung_closed_form(t), rtol=1e-10)


def test_chung_bound_examples():
    sup, bound = check_chung_recurrence(2.0, 1.0, 1.0, 0.0, 10 ** 6)
    assert bound == 1.0
    assert sup <= 1.0 + 0.01
    sup, bound = check_chung_recurrence(3.0, 4.0, 4.0, 0.0, 10 ** 5)
    assert bound == 2.0
    assert sup <= 2.02
    sup, _ = check_chung_recurrence(2.0, 1.0, 0.0, 1.0, 10 ** 4)
    assert sup < 1e-3
    with pytest.raises(ValueError):
        check_chung_recurrence(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        check_chung_recurrence(2.0, 1.0, 1.0, t_max=10)


@settings(max_examples=20, deadline=None)
@given(q=st.floats(2.0, 6.0), b=st.floats(0.0, 20.0), c=st.floats(0.1, 10.0))
def test_chung_bound_holds_broadly(q, b, c):
    # for q >= 2 the correction to t a_t is O(b log t / t); start on the
    # asymptotic path a_t = c / ((q - 1) (t + b)) so no large transient remains
    b = b + q + 1
    sup, bound = check_chung_recurrence(q, b, c, c / ((q - 1) * (1 + b)), 200_000)
    assert sup <= bound * 1.01 + 1e-12


def test_descent_zero_operator():
    p = zero_problem(3)
    tr = run("PEG", p, None, Constant(0.5), np.ones(3), 50, keep_states=True, warm=True)
    # the zero operator has no recorded L; supply one explicitly
    q = replace(p, lipschitz=1.0)
    rep = check_descent_along_run(tr, q, 0.5)
    assert rep.ok and rep.worst_slack == 0.0


@pytest.mark.parametrize("kind", ["PEG", "RG", "OG"])
def test_descent_strongly_monotone_quadratic(kind):
    p = make_strongly_monotone_quadratic(6, 1.0, 4.0, seed=1)
    gamma = 1 / (4 * p.lipschitz)
    x0 = np.random.default_rng(0).standard_normal(6)
    tr = run(kind, p, None, Constant(gamma), x0, 500, keep_states=True, warm=True)
    rep = check_descent_along_run(tr, p, gamma, tol=1e-9)
    assert rep.ok, str(rep)
    assert rep.trials == 500


def test_descent_peg_margin_by_hand():
    # two warm PEG steps on V(x) = x in 1-D, margins computed from scratch
    from segvi.problems import linear_problem
    p = linear_problem(np.eye(1), lipschitz=1.0, known_solution=np.zeros(1))
    g = 0.25
    tr = run("PEG", p, None, Constant(g), [1.0], 2, keep_states=True, warm=True)
    x1, xh0 = 1.0, 1.0
    h1 = x1 - g * xh0
    x2 = x1 - g * h1
    h2 = x2 - g * h1
    x3 = x2 - g * h2
    tau = [4 * g * g * (x1 - xh0) ** 2, g * g * (h1 - xh0) ** 2, g * g * (h2 - h1) ** 2]
    m1 = (x1 ** 2 - 2 * g * h1 * h1 + tau[0] - tau[1]) - x2 ** 2
    m2 = (x2 ** 2 - 2 * g * h2 * h2 + tau[1] - tau[2]) - x3 ** 2
    np.testing.assert_allclose(tr.bases()[:, 0], [x1, x2, x3], atol=1e-15)
    np.testing.assert_allclose(descent_taus("PEG", tr.leads(), tr.bases(), g, 1.0), tau, atol=1e-15)
    rep = check_descent_along_run(tr, p, g)
    assert rep.worst_slack == pytest.approx(min(m1 / max(1, x1 ** 2), m2 / max(1, x2 ** 2)), abs=1e-14)


def test_descent_on_constrained_bilinear_with_random_trial_point():
    p = make_bilinear(3, seed=0, cset=Ball(np.zeros(6), 0.4))
    gamma = 0.9 / (2 * p.lipschitz)
    x0 = p.set.project(np.random.default_rng(1).standard_normal(6))
    tr = run("PEG", p, None, Constant(gamma), x0, 300, keep_states=True, warm=True)
    trial = p.set.project(np.random.default_rng(2).standard_normal(6))
    assert check_descent_along_run(tr, p, gamma, p=trial).ok


def test_descent_preconditions():
    p = make_strongly_monotone_quadratic(2, 1.0, 2.0)
    cold = run("PEG", p, None, Constant(0.1), np.ones(2), 5, keep_states=True)
    with pytest.raises(ValueError):
        check_descent_along_run(cold, p, 0.1)
    bare = run("PEG", p, None, Constant(0.1), np.ones(2), 5, warm=True)
    with pytest.raises(ValueError):
        check_descent_along_run(bare, p, 0.1)
    with pytest.raises(ValueError):
        descent_taus("EG", np.zeros((2, 2)), np.zeros((2, 2)), 0.1, 1.0)


def test_descent_report_is_informational_when_step_too_large():
    p = make_strongly_monotone_quadratic(4, 0.1, 4.0, seed=2)
    gamma = 2.0 / p.lipschitz
    tr = run("PEG", p, None, Constant(gamma), np.ones(4), 30, keep_states=True, warm=True)
    rep = check_descent_along_run(tr, p, gamma)
    assert isinstance(rep, InequalityReport)
