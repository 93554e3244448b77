"""Extra-gradient iterations: EG and the single-call variants PEG, RG, OG.

States are indexed as in the half-integer scheme: after ``t`` iterations an
:class:`IterState` holds the base state ``X_{t+1}`` and the leading state
``X_{t+1/2}`` produced by iteration ``t``.  The initial state (``t = 1``)
holds ``X_1`` and, where meaningful, ``X_{1/2}``.

All kernels accept either a single vector of shape ``(d,)`` or a stack of
independent runs of shape ``(S, d)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .oracles import BASE, LEAD, BatchFeedback, NoiseModel, Oracle
from .schedules import steps
from .vi_core import NonFiniteError, VIProblem, WholeSpace, as_vector


class AlgorithmKind(str, enum.Enum):
    EG = "EG"
    PEG = "PEG"
    RG = "RG"
    OG = "OG"


SINGLE_CALL = (AlgorithmKind.PEG, AlgorithmKind.RG, AlgorithmKind.OG)


class InfeasibleStateError(RuntimeError):
    pass


@dataclass
class IterState:
    base: np.ndarray
    lead: np.ndarray
    carried_feedback: Optional[np.ndarray] = None
    prev_base: Optional[np.ndarray] = None
    t: int = 1

    def copy(self):
        c = lambda a: None if a is None else np.array(a, copy=True)
        return IterState(c(self.base), c(self.lead), c(self.carried_feedback),
                         c(self.prev_base), self.t)


def _as_feedback(oracle, run_id):
    if isinstance(oracle, Oracle):
        def fb(x, t, phase):
            if np.ndim(x) != 1:
                raise ValueError("a single Oracle serves one run; use BatchFeedback for stacks")
            return oracle.query(x, (run_id, t, phase))
        return fb
    return oracle


def init(kind, x_start, problem: VIProblem, oracle=None, warm=False, gamma=None, run_id=0):
    """Initial state from ``x_start``.

    Default convention (``warm=False``): ``X_0 = X_{1/2} = X_1 = x_start`` and
    ``V_{1/2} = 0``.  With ``warm=True`` the carried feedback is a real oracle
    call: PEG/OG take ``X_{1/2} = X_1`` and ``V_{1/2} = V(X_1)``; RG takes
    ``X_0 = X_{1/2} = x_start`` and ``X_1 = Pi(X_0 - gamma V(X_0))``.  Warm
    starts cost one oracle call and need ``oracle`` (and ``gamma`` for RG).
    """
    kind = AlgorithmKind(kind)
    x = np.array(x_start, dtype=float)
    if x.shape[-1] != problem.dim:
        raise ValueError(f"dimension mismatch: expected {problem.dim}, got {x.shape[-1]}")
    for row in np.atleast_2d(x):
        if not problem.set.contains(row):
            raise InfeasibleStateError("x_start is outside the constraint set")
    if kind is AlgorithmKind.EG:
        return IterState(x, x.copy())
    if not warm:
        if kind is AlgorithmKind.RG:
            return IterState(x, x.copy(), prev_base=x.copy())
        return IterState(x, x.copy(), carried_feedback=np.zeros_like(x))
    if oracle is None:
        raise ValueError("warm initialization queries the oracle")
    v = _as_feedback(oracle, run_id)(x, 0, LEAD)
    if kind is AlgorithmKind.RG:
        if gamma is None:
            raise ValueError("warm RG initialization needs a step size")
        x1 = problem.set.project(x - gamma * v)
        return IterState(x1, x.copy(), prev_base=x.copy())
    return IterState(x, x.copy(), carried_feedback=v)


def step_eg(state, problem, oracle, gamma, run_id=0):
    fb = _as_feedback(oracle, run_id)
    proj = problem.set.project
    lead = proj(state.base - gamma * fb(state.base, state.t, BASE))
    base = proj(state.base - gamma * fb(lead, state.t, LEAD))
    return IterState(base, lead, t=state.t + 1)


def step_peg(state, problem, oracle, gamma, run_id=0):
    fb = _as_feedback(oracle, run_id)
    proj = problem.set.project
    lead = proj(state.base - gamma * state.carried_feedback)
    g = fb(lead, state.t, LEAD)
    base = proj(state.base - gamma * g)
    return IterState(base, lead, carried_feedback=g, t=state.t + 1)


def step_rg(state, problem, oracle, gamma, run_id=0):
    fb = _as_feedback(oracle, run_id)
    lead = 2.0 * state.base - state.prev_base
    g = fb(lead, state.t, LEAD)
    base = problem.set.project(state.base - gamma * g)
    return IterState(base, lead, prev_base=state.base, t=state.t + 1)


def step_og(state, problem, oracle, gamma, run_id=0):
    fb = _as_feedback(oracle, run_id)
    lead = problem.set.project(state.base - gamma * state.carried_feedback)
    g = fb(lead, state.t, LEAD)
    base = lead + gamma * state.carried_feedback - gamma * g
    return IterState(base, lead, carried_feedback=g, t=state.t + 1)


STEPS = {
    AlgorithmKind.EG: step_eg,
    AlgorithmKind.PEG: step_peg,
    AlgorithmKind.RG: step_rg,
    AlgorithmKind.OG: step_og,
}

# which recorded states the update rule keeps feasible
_FEASIBLE = {
    AlgorithmKind.EG: ("base", "lead"),
    AlgorithmKind.PEG: ("base", "lead"),
    AlgorithmKind.RG: ("base",),
    AlgorithmKind.OG: ("lead",),
}


def calls_per_iteration(kind):
    return 2 if AlgorithmKind(kind) is AlgorithmKind.EG else 1


def record_times(T, mode="thinned", dense=100):
    """Iterations at which metrics are recorded.

    ``"thinned"`` keeps every ``t <= dense`` and then advances by
    ``ceil(t / dense)``, which gives log-uniform coverage of long runs.
    """
    if isinstance(mode, str):
        if mode == "all":
            return np.arange(1, T + 1)
        if mode == "none":
            return np.array([T])
        if mode != "thinned":
            raise ValueError(f"unknown record mode {mode!r}")
        ts, t = [], 1
        while t <= T:
            ts.append(t)
            t += 1 if t < dense else math.ceil(t / dense)
        if ts[-1] != T:
            ts.append(T)
        return np.asarray(ts)
    ts = np.unique(np.asarray(list(mode), dtype=int))
    if ts.size and (ts[0] < 1 or ts[-1] > T):
        raise ValueError("record times must lie in [1, T]")
    return ts


@dataclass
class Metrics:
    """Per-record metrics; arrays are ``(n,)`` for one run, ``(n, S)`` for a sweep."""

    t: np.ndarray
    oracle_calls: np.ndarray
    dist_sq_last: np.ndarray
    dist_sq_avg_lead: np.ndarray
    dist_sq_avg_base: np.ndarray
    err_res: Optional[np.ndarray] = None

    def column(self, name):
        return getattr(self, name)

    def series(self, name, row=None):
        """``(t, value)`` pairs for ``fit_rate``."""
        vals = getattr(self, name)
        if row is not None:
            vals = vals[:, row]
        return np.column_stack([self.t, vals])


@dataclass
class Trajectory:
    kind: AlgorithmKind
    init_state: IterState
    final_state: IterState
    oracle_calls: int
    ergodic_lead: np.ndarray
    ergodic_base: np.ndarray
    metrics: Metrics
    max_lead_dist: Optional[np.ndarray] = None
    states: Optional[list] = None
    warm: bool = False
    schedule: object = None
    base_history: Optional[np.ndarray] = None

    @property
    def T(self):
        return self.final_state.t - 1

    def leads(self):
        """``X_{k+1/2}`` for ``k = 0..T`` (needs ``keep_states``)."""
        return np.array([s.lead for s in self._need_states()])

    def bases(self):
        """``X_{k+1}`` for ``k = 0..T`` (needs ``keep_states``)."""
        return np.array([s.base for s in self._need_states()])

    def _need_states(self):
        if self.states is None:
            raise ValueError("trajectory was run without keep_states=True")
        return self.states


def _sq(a, b):
    d = a - b
    return np.sum(d * d, axis=-1)


def _engine(*args):
    # overflow is reported as NonFiniteError with its iteration, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _engine_loop(*args)


def _engine_loop(kind, problem, fb, schedule, x_start, T, record, keep_states, warm,
                 merit, run_id, check_feasibility, keep_base_history):
    kind = AlgorithmKind(kind)
    if T < 1:
        raise ValueError("T must be >= 1")
    gammas = steps(schedule, T)
    stepper = STEPS[kind]
    state = init(kind, x_start, problem, fb, warm=warm, gamma=gammas[0], run_id=run_id)
    init_state = state.copy()
    calls = 1 if (warm and kind is not AlgorithmKind.EG) else 0
    per_iter = calls_per_iteration(kind)
    sol = problem.known_solution
    feas = () if (isinstance(problem.set, WholeSpace) or not check_feasibility) else _FEASIBLE[kind]

    rec = record_times(T, record)
    n = rec.size
    batch_shape = state.base.shape[:-1]
    nan = lambda: np.full((n,) + batch_shape, np.nan)
    m_calls = np.zeros(n, dtype=int)
    m_last, m_lead, m_base = nan(), nan(), nan()
    m_err = nan() if merit is not None else None
    hist = np.empty((n,) + state.base.shape) if keep_base_history else None

    lead_sum = np.zeros_like(state.base)
    base_sum = np.zeros_like(state.base)
    max_lead = np.zeros(batch_shape) if sol is not None else None
    states = [init_state] if keep_states else None

    k = 0
    for t in range(1, T + 1):
        try:
            state = stepper(state, problem, fb, gammas[t - 1])
        except NonFiniteError as exc:
            if getattr(exc, "iteration", None) is None:
                exc.iteration = t
                exc.rows = []
            raise
        calls += per_iter
        if not np.all(np.isfinite(state.base)) or not np.all(np.isfinite(state.lead)):
            bad = ~np.all(np.isfinite(state.base), axis=-1)
            rows = np.flatnonzero(np.atleast_1d(bad)).tolist()
            err = NonFiniteError(f"non-finite state at iteration {t}", rows)
            err.iteration = t
            err.rows = rows
            raise err
        for name in feas:
            x = getattr(state, name)
            gap = np.linalg.norm(problem.set.project(x) - x, axis=-1)
            if np.any(gap > 1e-10 * np.maximum(1.0, np.linalg.norm(x, axis=-1))):
                raise InfeasibleStateError(f"{name} state left the set at iteration {t}")
        lead_sum += state.lead
        base_sum += state.base
        if sol is not None:
            np.maximum(max_lead, np.sqrt(_sq(state.lead, sol)), out=max_lead)
        if keep_states:
            states.append(state.copy())
        if k < n and rec[k] == t:
            m_calls[k] = calls
            if sol is not None:
                m_last[k] = _sq(state.base, sol)
                m_lead[k] = _sq(lead_sum / t, sol)
                m_base[k] = _sq(base_sum / t, sol)
            if merit is not None:
                m_err[k] = _err_res(lead_sum / t, problem, merit)
            if hist is not None:
                hist[k] = state.base
            k += 1

    metrics = Metrics(rec, m_calls, m_last, m_lead, m_base, m_err)
    return Trajectory(kind, init_state, state, calls, lead_sum / T, base_sum / T, metrics,
                      max_lead, states, warm, schedule, hist)


def _err_res(x, problem, merit):
    from .merit import restricted_error

    if x.ndim == 1:
        return restricted_error(x, problem, merit)
    return np.array([restricted_error(row, problem, merit) for row in x])


def run(kind, problem, oracle, schedule, x_start, T, record="thinned", keep_states=False,
        warm=False, merit=None, run_id=0, check_feasibility=True, keep_base_history=False):
    """Run ``T`` iterations of ``kind`` from ``x_start``.

    Parameters
    ----------
    oracle : Oracle or None
        ``None`` means exact feedback.
    record : {"thinned", "all", "none"} or iterable of int
    merit : MeritConfig, optional
        When given, ``err_res`` (restricted error of the lead ergodic
        average) is computed at every recorded iteration.

    Raises
    ------
    NonFiniteError
        If an iterate blows up; ``.iteration`` names the step.
    InfeasibleStateError
        If a state the update keeps feasible drifts out of the set.
    """
    if oracle is None:
        oracle = Oracle(problem, NoiseModel())
    x_start = as_vector(x_start, problem.dim)
    if x_start.ndim != 1:
        raise ValueError("run() takes a single start point; use sweep() for stacks")
    fb = _as_feedback(oracle, run_id)
    return _engine(kind, problem, fb, schedule, x_start, T, record, keep_states, warm,
                   merit, run_id, check_feasibility, keep_base_history)


def sweep(kind, problem, oracles, schedule, x_starts, T, record="thinned", warm=False,
          merit=None, run_id=0, check_feasibility=True, keep_base_history=False):
    """Run independent copies of the method as one vectorized stack.

    Row ``s`` of ``x_starts`` is driven by ``oracles[s]``; noise values are
    the same as in ``run(kind, problem, oracles[s], ...)``.
    """
    x_starts = np.atleast_2d(np.asarray(x_starts, dtype=float))
    if len(oracles) != x_starts.shape[0]:
        raise ValueError("need one oracle per start point")
    fb = BatchFeedback(oracles, run_id=run_id)
    return _engine(kind, problem, fb, schedule, x_starts, T, record, False, warm,
                   merit, run_id, check_feasibility, keep_base_history)
