"""Variational-inequality domain types.

Vectors are plain 1-D ``float64`` numpy arrays.  Every operator and projection
in the package also accepts a stack of vectors with shape ``(..., dim)`` so
that multi-seed runs can be vectorized.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

MEMBERSHIP_TOL = 1e-10


class NonFiniteError(FloatingPointError):
    """An operator or iterate produced NaN/Inf coordinates."""

    def __init__(self, message, coords=None):
        super().__init__(message)
        self.coords = coords


class NotASolutionError(ValueError):
    """Candidate point violates the first-order condition of the VI."""


def as_vector(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dim is not None and x.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.shape[-1]}")
    return x


def _check_dim(y, dim):
    if y.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {y.shape[-1]}")


# ---------------------------------------------------------------------------
# Convex sets
# ---------------------------------------------------------------------------

class ConvexSet:
    """Closed convex set with an exact Euclidean projection."""

    dim: int
    bounded = True

    def project(self, y):
        raise NotImplementedError

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = as_vector(x, self.dim)
        return bool(np.all(np.linalg.norm(self.project(x) - x, axis=-1) <= tol))

    def sample(self, rng, n):
        """Draw ``n`` points uniformly from the set."""
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    dim: int
    bounded = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def project(self, y):
        y = np.asarray(y, dtype=float)
        _check_dim(y, self.dim)
        return y.copy()

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = as_vector(x, self.dim)
        return bool(np.all(np.isfinite(x)))

    def sample(self, rng, n):
        raise ValueError("cannot sample uniformly from the whole space; pass a bounded region")


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_vector(self.center)
        object.__setattr__(self, "center", c)
        if not np.all(np.isfinite(c)):
            raise ValueError("ball center must be finite")
        if not (self.radius > 0):
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        _check_dim(y, self.dim)
        d = y - self.center
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = self.radius / np.where(nrm > self.radius, nrm, self.radius)
        return self.center + d * scale

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = as_vector(x, self.dim)
        return bool(np.all(np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol))

    def sample(self, rng, n):
        # rejection from the bounding box blows up with dimension; the
        # direction/radius construction is exactly uniform as well
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + g * r[:, None]

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = as_vector(self.lower), as_vector(self.upper)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same shape")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        _check_dim(y, self.dim)
        return np.clip(y, self.lower, self.upper)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = as_vector(x, self.dim)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng, n):
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()


@dataclass(frozen=True)
class Simplex(ConvexSet):
    """Probability simplex ``{x >= 0, sum(x) = 1}``."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def project(self, y):
        y = np.asarray(y, dtype=float)
        _check_dim(y, self.dim)
        # sort-and-threshold, vectorized over leading axes
        u = -np.sort(-y, axis=-1)
        css = np.cumsum(u, axis=-1) - 1.0
        k = np.arange(1, self.dim + 1)
        cond = u - css / k > 0
        rho = self.dim - 1 - np.argmax(cond[..., ::-1], axis=-1)
        theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
        return np.maximum(y - theta, 0.0)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = as_vector(x, self.dim)
        return bool(np.all(x >= -tol) and np.all(np.abs(x.sum(axis=-1) - 1.0) <= tol))

    def sample(self, rng, n):
        return rng.dirichlet(np.ones(self.dim), size=n)

    def bounding_box(self):
        return np.zeros(self.dim), np.ones(self.dim)


def project(cset: ConvexSet, y):
    """Euclidean projection of ``y`` onto ``cset``."""
    return cset.project(as_vector(y))


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

class MonotonicityClass(str, enum.Enum):
    STRONGLY_MONOTONE = "StronglyMonotone"
    MONOTONE = "Monotone"
    NON_MONOTONE_REGULAR = "NonMonotoneRegular"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SaddleStructure:
    """Min-max structure ``V = (grad_theta Phi, -grad_phi Phi)``.

    ``objective(theta, phi)`` must broadcast over leading axes.
    """

    objective: Callable
    d1: int


@dataclass(eq=False)
class VIProblem:
    """A variational inequality ``<V(x*), x - x*> >= 0`` over a convex set.

    Parameters
    ----------
    dim : int
    operator : callable
        Maps an array of shape ``(..., dim)`` to one of the same shape.
    set : ConvexSet
    lipschitz, strong_mono : float, optional
        Known constants.  For operators that are only locally Lipschitz,
        ``lipschitz`` is a regional constant valid on ``lipschitz_radius``.
    known_solution : array, optional
    vjp : callable, optional
        ``vjp(x, w)`` returns ``J_V(x)^T w``, batched like ``operator``.
    affine : bool
        Declares ``V(x) = M x + q``.
    """

    dim: int
    operator: Callable
    set: ConvexSet
    lipschitz: Optional[float] = None
    strong_mono: Optional[float] = None
    known_solution: Optional[np.ndarray] = None
    monotonicity_class: MonotonicityClass = MonotonicityClass.UNKNOWN
    vjp: Optional[Callable] = None
    affine: bool = False
    saddle: Optional[SaddleStructure] = None
    lipschitz_radius: Optional[float] = None
    name: str = "problem"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.set.dim != self.dim:
            raise ValueError("set dimension does not match problem dimension")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        if self.strong_mono is not None and self.strong_mono < 0:
            raise ValueError("strong monotonicity modulus must be nonnegative")
        self.monotonicity_class = MonotonicityClass(self.monotonicity_class)
        if self.known_solution is not None:
            self.known_solution = as_vector(self.known_solution, self.dim)
            if not self.set.contains(self.known_solution, 1e-8):
                raise ValueError("known_solution lies outside the constraint set")

    def __call__(self, x):
        return self.operator(x)

    def jacobian_t(self, x, w, fd_step=1e-6):
        """``J_V(x)^T w`` via ``vjp`` or, failing that, central differences."""
        if self.vjp is not None:
            return self.vjp(x, w)
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, w.shape))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = fd_step
            col = (self.operator(x + e) - self.operator(x - e)) / (2 * fd_step)
            out[..., j] = np.sum(col * w, axis=-1)
        return out

    def natural_residual(self, x):
        """``||x - Pi(x - V(x))||``, zero exactly at solutions."""
        x = as_vector(x, self.dim)
        return float(np.linalg.norm(x - self.set.project(x - self.operator(x))))


def eval_operator(problem: VIProblem, x):
    """Evaluate ``V(x)``; raise :class:`NonFiniteError` on NaN/Inf output."""
    x = as_vector(x, problem.dim)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite input point", np.flatnonzero(~np.isfinite(x)))
    v = np.asarray(problem.operator(x), dtype=float)
    bad = ~np.isfinite(v)
    if bad.any():
        idx = np.argwhere(bad)
        raise NonFiniteError(f"operator returned non-finite values at coordinates {idx.tolist()}", idx)
    return v


def _region_pairs(region, n, rng):
    x = region.sample(rng, n)
    y = region.sample(rng, n)
    d2 = np.sum((x - y) ** 2, axis=1)
    while np.any(d2 == 0):
        bad = d2 == 0
        y[bad] = region.sample(rng, int(bad.sum()))
        d2 = np.sum((x - y) ** 2, axis=1)
    return x, y, d2


def probe_monotonicity(problem: VIProblem, samples, rng_seed, region: ConvexSet):
    """Extreme values of ``<V(x') - V(x), x' - x> / ||x' - x||^2`` over random pairs.

    A negative minimum is a witness of non-monotonicity; the minimum itself
    estimates the strong-monotonicity modulus over ``region``.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    x, y, d2 = _region_pairs(region, samples, rng)
    q = np.sum((problem.operator(y) - problem.operator(x)) * (y - x), axis=1) / d2
    return float(q.min()), float(q.max())


def probe_lipschitz(problem: VIProblem, samples, rng_seed, region: ConvexSet):
    """Largest sampled ``||V(x') - V(x)|| / ||x' - x||`` (a lower bound on L)."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    x, y, d2 = _region_pairs(region, samples, rng)
    r = np.linalg.norm(problem.operator(y) - problem.operator(x), axis=1) / np.sqrt(d2)
    return float(r.max())


# ---------------------------------------------------------------------------
# Regularity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    min_symmetric_eigenvalue: float
    neighborhood_radius: float
    local_strong_mono: float
    local_bound: float
    lipschitz_estimate: float = float("nan")

    @property
    def is_regular(self):
        return self.min_symmetric_eigenvalue > 0


def fd_jacobian(problem: VIProblem, x, fd_step=1e-5):
    """Central finite-difference Jacobian, ``J[i, j] = dV_i / dx_j``."""
    x = as_vector(x, problem.dim)
    steps = fd_step * np.eye(problem.dim)
    plus = problem.operator(x + steps)
    minus = problem.operator(x - steps)
    return ((plus - minus) / (2 * fd_step)).T


def _tangent_basis(cset, candidate, rng, n=None):
    if isinstance(cset, WholeSpace):
        return np.eye(cset.dim)
    n = n or 4 * cset.dim + 16
    pts = cset.sample(rng, n)
    diffs = np.vstack([pts - candidate, pts[1:] - pts[:-1]])
    _, s, vt = np.linalg.svd(diffs, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * s[0])) if s.size and s[0] > 0 else 0
    return vt[:rank].T


def check_regular_solution(problem: VIProblem, candidate, radius, fd_step=1e-5,
                           samples=4000, rng_seed=0, solution_tol=1e-6):
    """Finite-difference certificate that ``candidate`` is a regular solution.

    Raises
    ------
    NotASolutionError
        If the natural residual at ``candidate`` exceeds ``solution_tol``.
        A solution that is merely not regular is reported through a
        nonpositive ``min_symmetric_eigenvalue`` instead.
    """
    if not radius > 0 or not fd_step > 0:
        raise ValueError("radius and fd_step must be positive")
    candidate = as_vector(candidate, problem.dim)
    if not problem.set.contains(candidate, 1e-8):
        raise NotASolutionError("candidate lies outside the constraint set")
    res = problem.natural_residual(candidate)
    if res > solution_tol:
        raise NotASolutionError(f"candidate is not a solution (natural residual {res:.3e})")

    rng = np.random.default_rng(rng_seed)
    jac = fd_jacobian(problem, candidate, fd_step)
    sym = 0.5 * (jac + jac.T)
    basis = _tangent_basis(problem.set, candidate, rng)
    if basis.shape[1] == 0:
        lam = float("inf")
    else:
        lam = float(np.linalg.eigvalsh(basis.T @ sym @ basis)[0])

    ball = Ball(candidate, radius)
    pts = ball.sample(rng, samples)
    if not isinstance(problem.set, WholeSpace):
        pts = problem.set.project(pts)
    d = pts - candidate
    d2 = np.sum(d * d, axis=1)
    keep = d2 > 0
    v = problem.operator(pts)
    quot = np.sum(v[keep] * d[keep], axis=1) / d2[keep]
    bound = float(np.max(np.linalg.norm(v, axis=1)))
    lip = probe_lipschitz(problem, max(samples, 2), rng_seed + 1, ball)
    return RegularityReport(lam, float(radius), float(quot.min()), bound, lip)
