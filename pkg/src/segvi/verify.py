"""Randomized numerical checks of the projection lemmas, the Chung recurrence,
and the quasi-descent inequality along actual runs.

Every check returns an :class:`InequalityReport`; a *margin* is
``rhs - lhs`` of the inequality being tested, so negative margins are
violations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algorithms import AlgorithmKind
from .vi_core import Ball, Box, WholeSpace

DEFAULT_TOL = 1e-10


@dataclass
class InequalityReport:
    name: str
    trials: int
    violations: int
    worst_slack: float
    seeds: list = field(default_factory=list)
    tol: float = DEFAULT_TOL
    witness: Optional[dict] = None

    @property
    def ok(self):
        return self.violations == 0

    def merge(self, other):
        worst = min(self.worst_slack, other.worst_slack)
        witness = self.witness if self.worst_slack <= other.worst_slack else other.witness
        return InequalityReport(self.name, self.trials + other.trials,
                                self.violations + other.violations, worst,
                                self.seeds + other.seeds, self.tol, witness)

    def __str__(self):
        status = "PASS" if self.ok else "FAIL"
        return (f"{status} {self.name}: trials={self.trials} violations={self.violations} "
                f"worst_slack={self.worst_slack:.3e} tol={self.tol:g}")


def _report(name, margins, tol, seed, witness_fn):
    margins = np.asarray(margins, dtype=float)
    i = int(np.argmin(margins))
    viol = int(np.sum(margins < -tol))
    return InequalityReport(name, margins.size, viol, float(margins[i]), [seed], tol,
                            witness_fn(i) if viol else None)


def _random_set(rng, dim, kind=None):
    kind = kind or ("ball" if rng.random() < 0.5 else "box")
    if kind == "ball":
        return Ball(rng.standard_normal(dim), 0.1 + 2.0 * rng.random())
    if kind == "box":
        lo = rng.standard_normal(dim) - rng.random(dim)
        return Box(lo, lo + 0.1 + 2.0 * rng.random(dim))
    return WholeSpace(dim)


def _point_in(rng, cset):
    if isinstance(cset, WholeSpace):
        return 3.0 * rng.standard_normal(cset.dim)
    return cset.sample(rng, 1)[0]


def _sq(v):
    return float(v @ v)


def check_lemma_three_point(trials=10_000, seed=0, dim=5, set_kind=None, tol=DEFAULT_TOL,
                            project=None):
    """``||x+ - p||^2 <= ||x - p||^2 - 2<y, x+ - p> - ||x+ - x||^2`` with ``x+ = Pi_C(x - y)``.

    ``project(cset, v)`` overrides the projection (fault injection).
    """
    rng = np.random.default_rng(seed)
    proj = project or (lambda c, v: c.project(v))
    margins, wit = np.empty(trials), []
    for k in range(trials):
        C = _random_set(rng, dim, set_kind)
        x = 3.0 * rng.standard_normal(dim)
        y = 3.0 * rng.standard_normal(dim)
        p = _point_in(rng, C)
        xp = proj(C, x - y)
        lhs = _sq(xp - p)
        rhs = _sq(x - p) - 2.0 * (y @ (xp - p)) - _sq(xp - x)
        margins[k] = rhs - lhs
        wit.append((x, y, p, type(C).__name__))
    return _report("three_point", margins, tol, seed,
                   lambda i: {"x": wit[i][0].tolist(), "y": wit[i][1].tolist(),
                              "p": wit[i][2].tolist(), "set": wit[i][3],
                              "margin": float(margins[i])})


def check_lemma_four_point(trials=10_000, seed=0, part="A", dim=5, tol=DEFAULT_TOL,
                           project=None):
    """Four-point lemma.

    Part A (``C2`` is the whole space): the identity
    ``||x2+ - p||^2 = ||x - p||^2 - 2<y2, x1+ - p> + ||x2+ - x1+||^2 - ||x1+ - x||^2``;
    the margin is ``-|lhs - rhs|``.  Part B (``C1 = C2`` a ball): both the
    cross-term inequality and its Young-relaxed form; the margin is the
    smaller of the two.
    """
    part = part.upper()
    if part not in ("A", "B"):
        raise ValueError("part must be 'A' or 'B'")
    rng = np.random.default_rng(seed)
    proj = project or (lambda c, v: c.project(v))
    margins, wit = np.empty(trials), []
    for k in range(trials):
        x = 3.0 * rng.standard_normal(dim)
        y1 = 3.0 * rng.standard_normal(dim)
        y2 = 3.0 * rng.standard_normal(dim)
        C1 = _random_set(rng, dim, "ball")
        x1 = proj(C1, x - y1)
        if part == "A":
            p = 3.0 * rng.standard_normal(dim)
            x2 = x - y2
            lhs = _sq(x2 - p)
            rhs = _sq(x - p) - 2.0 * (y2 @ (x1 - p)) + _sq(x2 - x1) - _sq(x1 - x)
            margins[k] = -abs(lhs - rhs)
        else:
            p = _point_in(rng, C1)
            x2 = proj(C1, x - y2)
            lhs = _sq(x2 - p)
            base = _sq(x - p) - 2.0 * (y2 @ (x1 - p)) - _sq(x1 - x)
            tight = base + 2.0 * ((y2 - y1) @ (x1 - x2)) - _sq(x2 - x1)
            relaxed = base + _sq(y2 - y1)
            margins[k] = min(tight - lhs, relaxed - lhs)
        wit.append((x, y1, y2, p))
    return _report(f"four_point_{part}", margins, tol, seed,
                   lambda i: {"x": wit[i][0].tolist(), "y1": wit[i][1].tolist(),
                              "y2": wit[i][2].tolist(), "p": wit[i][3].tolist(),
                              "margin": float(margins[i])})


def chung_sequence(q, b, c_prime, a_init, t_max):
    """Worst case of ``a_{t+1} <= (1 - q/(t+b)) a_t + c'/(t+b)^2``, ``a_1 = a_init``."""
    a = np.empty(t_max)
    a[0] = a_init
    cur = float(a_init)
    for t in range(1, t_max):
        s = t + b
        cur = (1.0 - q / s) * cur + c_prime / (s * s)
        a[t] = cur
    return a


def check_chung_recurrence(q, b, c_prime, a_init=0.0, t_max=1_000_000):
    """Return ``(max over the last decade of t * a_t, c'/(q - 1))``."""
    if not q > 1:
        raise ValueError("the recurrence bound needs q > 1")
    if c_prime < 0:
        raise ValueError("c_prime must be nonnegative")
    if t_max < 1000:
        raise ValueError("t_max must be at least 1000")
    a = chung_sequence(q, b, c_prime, a_init, t_max)
    t = np.arange(1, t_max + 1, dtype=float)
    tail = slice(t_max // 10, t_max)
    return float(np.max(t[tail] * a[tail])), c_prime / (q - 1.0)


def descent_taus(kind, leads, bases, gamma, lipschitz):
    """The telescoping sequence ``tau_t`` for ``t = 1..T+1``.

    PEG/OG: ``tau_1 = 4 g^2 L^2 ||X_1 - X_{1/2}||^2`` and
    ``tau_t = g^2 L^2 ||X_{t-1/2} - X_{t-3/2}||^2``.
    RG: ``tau_t = g L ||X_t - X_{t-1/2}||^2``.
    ``leads[k] = X_{k+1/2}`` and ``bases[k] = X_{k+1}``, ``k = 0..T``.
    """
    kind = AlgorithmKind(kind)
    T = leads.shape[0] - 1
    tau = np.empty(T + 1)  # tau[t-1] is tau_t
    g2l2 = (gamma * lipschitz) ** 2
    if kind in (AlgorithmKind.PEG, AlgorithmKind.OG):
        tau[0] = 4.0 * g2l2 * _sq(bases[0] - leads[0])
        diffs = np.sum((leads[1:] - leads[:-1]) ** 2, axis=1)
        tau[1:] = g2l2 * diffs
    elif kind is AlgorithmKind.RG:
        # X_t - X_{t-1/2}: bases[t-1] - leads[t-1]
        tau[:] = gamma * lipschitz * np.sum((bases - leads) ** 2, axis=1)
    else:
        raise ValueError("descent check is defined for PEG, OG and RG")
    return tau


def check_descent_along_run(trajectory, problem, gamma, tol=1e-9, p=None):
    """Check the quasi-descent inequality at every iteration of a deterministic run.

    ``||X_{t+1}-p||^2 <= ||X_t-p||^2 - 2 g <V(X_{t+1/2}), X_{t+1/2}-p> + tau_t - tau_{t+1}``

    The trajectory must be run with ``keep_states=True`` and ``warm=True``
    so that the carried feedback is ``V(X_{1/2})``.
    """
    if trajectory.states is None:
        raise ValueError("trajectory has no recorded states; run with keep_states=True")
    if not trajectory.warm:
        raise ValueError("descent check needs a warm start so that X_{1/2} is a real state")
    if problem.lipschitz is None:
        raise ValueError("problem has no Lipschitz constant")
    if p is None:
        if problem.known_solution is None:
            raise ValueError("need a trial point p")
        p = problem.known_solution
    p = np.asarray(p, dtype=float)
    leads = trajectory.leads()
    bases = trajectory.bases()
    tau = descent_taus(trajectory.kind, leads, bases, gamma, problem.lipschitz)
    T = leads.shape[0] - 1
    x_t = bases[:-1]
    x_next = bases[1:]
    x_half = leads[1:]
    v_half = problem.operator(x_half)
    lhs = np.sum((x_next - p) ** 2, axis=1)
    rhs = (np.sum((x_t - p) ** 2, axis=1) - 2.0 * gamma * np.sum(v_half * (x_half - p), axis=1)
           + tau[:T] - tau[1:T + 1])
    scale = np.maximum(1.0, np.sum((x_t - p) ** 2, axis=1))
    margins = (rhs - lhs) / scale
    return _report(f"descent_{trajectory.kind.value}", margins, tol, 0,
                   lambda i: {"t": i + 1, "margin": float(margins[i])})
