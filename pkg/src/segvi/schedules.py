"""Step-size rules and checks of the conditions the convergence theorems need."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import polygamma


@dataclass(frozen=True)
class Constant:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class InverseLinear:
    """``gamma_t = gamma / (t + b)`` for ``t >= 1``."""

    gamma: float
    b: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.b < 0:
            raise ValueError("b must be nonnegative")


StepSchedule = Constant | InverseLinear


def step_at(schedule, t):
    if t < 1:
        raise ValueError("iterations are 1-indexed; t must be >= 1")
    if isinstance(schedule, Constant):
        return schedule.gamma
    return schedule.gamma / (t + schedule.b)


def steps(schedule, t_max):
    """Vector of ``gamma_t`` for ``t = 1..t_max``."""
    t = np.arange(1, t_max + 1, dtype=float)
    if isinstance(schedule, Constant):
        return np.full(t_max, schedule.gamma)
    return schedule.gamma / (t + schedule.b)


def sum_of_squares(schedule):
    """``sum_{t>=1} gamma_t^2`` (infinite for a constant step)."""
    if isinstance(schedule, Constant):
        return math.inf
    return schedule.gamma ** 2 * float(polygamma(1, schedule.b + 1.0))


@dataclass(frozen=True)
class Condition:
    name: str
    required: float
    actual: float
    passed: bool


@dataclass(frozen=True)
class ScheduleValidation:
    conditions: list = field(default_factory=list)

    @property
    def satisfied(self):
        return all(c.passed for c in self.conditions)

    def failures(self):
        return [c for c in self.conditions if not c.passed]

    def __str__(self):
        lines = [f"satisfied={self.satisfied}"]
        for c in self.conditions:
            mark = "ok " if c.passed else "FAIL"
            lines.append(f"  [{mark}] {c.name}: required {c.required:g}, actual {c.actual:g}")
        return "\n".join(lines)


DET_ERGODIC = "DetErgodic"
STOCH_GLOBAL = "StochGlobal"

# gamma < 1/(c L); EG is the classical two-call method with c = 1
ERGODIC_CONSTANT = {"EG": 1.0, "PEG": 2.0, "OG": 2.0, "RG": 1.0 + math.sqrt(2.0)}


def _missing(name):
    return Condition(f"missing constant {name}", float("nan"), float("nan"), False)


def validate(schedule, problem, algorithm, theorem=DET_ERGODIC):
    """Check ``schedule`` against the hypotheses of a convergence theorem.

    ``DetErgodic``: constant ``gamma < 1/(cL)``.  ``StochGlobal``: an
    inverse-linear schedule with ``gamma > 1/alpha`` and ``b >= 4 L gamma``.
    Failures are reported, never raised.
    """
    algorithm = str(getattr(algorithm, "value", algorithm))
    conds = []
    lip = problem.lipschitz
    alpha = problem.strong_mono
    if theorem == DET_ERGODIC:
        const = isinstance(schedule, Constant)
        conds.append(Condition("constant step", 1.0, 1.0 if const else 0.0, const))
        if lip is None:
            conds.append(_missing("L"))
        else:
            c = ERGODIC_CONSTANT[algorithm]
            bound = 1.0 / (c * lip)
            conds.append(Condition(f"gamma < 1/({c:.4g} L)", bound, schedule.gamma,
                                   schedule.gamma < bound))
    elif theorem == STOCH_GLOBAL:
        inv = isinstance(schedule, InverseLinear)
        conds.append(Condition("inverse-linear step", 1.0, 1.0 if inv else 0.0, inv))
        if alpha is None or alpha <= 0:
            conds.append(_missing("alpha"))
        else:
            conds.append(Condition("gamma > 1/alpha", 1.0 / alpha, schedule.gamma,
                                   schedule.gamma > 1.0 / alpha))
        if lip is None:
            conds.append(_missing("L"))
        elif inv:
            req = 4.0 * lip * schedule.gamma
            conds.append(Condition("b >= 4 L gamma", req, schedule.b, schedule.b >= req))
    else:
        raise ValueError(f"unknown theorem {theorem!r}")
    return ScheduleValidation(conds)
