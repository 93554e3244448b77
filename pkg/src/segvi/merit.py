"""Convergence measures: squared distance, restricted error / Nikaido-Isoda
gap, and log-scale rate fits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .vi_core import Ball, VIProblem, WholeSpace, as_vector

CLOSED_FORM = "ClosedFormAffine"
PROJECTED_ASCENT = "ProjectedAscent"


class NonAffineError(ValueError):
    pass


class NonPositiveValueError(ValueError):
    pass


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MeritConfig:
    """Restricted domain ``X ∩ B_R(center)`` and the inner maximizer to use."""

    radius: float
    center: np.ndarray
    inner_solver: str = PROJECTED_ASCENT
    restarts: int = 20
    iters: int = 500
    step: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", as_vector(self.center))
        if self.inner_solver not in (CLOSED_FORM, PROJECTED_ASCENT):
            raise ValueError(f"unknown inner solver {self.inner_solver!r}")

    @classmethod
    def around_start(cls, problem: VIProblem, x_start, radius=None, **kw):
        """Center at ``X_1``; radius defaults to ``2 ||X_1 - x*||``."""
        x_start = as_vector(x_start, problem.dim)
        if radius is None:
            if problem.known_solution is None:
                raise ValueError("radius is required when no solution is known")
            radius = 2.0 * float(np.linalg.norm(x_start - problem.known_solution))
            if radius == 0:
                radius = 1.0
        return cls(radius, x_start, **kw)


def dist_sq(x, solution):
    x = np.asarray(x, dtype=float)
    solution = np.asarray(solution, dtype=float)
    if x.shape[-1] != solution.shape[-1]:
        raise ValueError("dimension mismatch")
    d = x - solution
    return np.sum(d * d, axis=-1) if d.ndim > 1 else float(d @ d)


# ---------------------------------------------------------------------------
# restricted domain
# ---------------------------------------------------------------------------

class _Domain:
    def __init__(self, cset, cfg):
        self.cset = cset
        self.ball = Ball(cfg.center, cfg.radius)
        self.single_ball = None
        if isinstance(cset, WholeSpace):
            self.single_ball = self.ball
        elif isinstance(cset, Ball):
            gap = np.linalg.norm(cset.center - self.ball.center)
            if gap + self.ball.radius <= cset.radius:
                self.single_ball = self.ball
            elif gap + cset.radius <= self.ball.radius:
                self.single_ball = cset

    def project(self, y, iters=200):
        if self.single_ball is not None:
            return self.single_ball.project(y)
        # Dykstra's alternating projections onto set ∩ ball
        x = np.array(y, dtype=float)
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(iters):
            z = self.cset.project(x + p)
            p = x + p - z
            x_new = self.ball.project(z + q)
            q = z + q - x_new
            if np.max(np.abs(x_new - x)) < 1e-14:
                x = x_new
                break
            x = x_new
        # finish inside the set so every evaluated point is admissible
        return self.cset.project(x)

    def sample(self, rng, n):
        return self.project(self.ball.sample(rng, n))


# ---------------------------------------------------------------------------
# inner maximizers
# ---------------------------------------------------------------------------

def _trust_region_max(value_c, grad_c, S, radius):
    """Maximize ``value_c + g.y - y^T S y`` over ``||y|| <= radius``."""
    lam_s, Q = np.linalg.eigh(0.5 * (S + S.T))
    gh = Q.T @ grad_c
    scale = max(1.0, np.max(np.abs(lam_s)))
    tiny = 1e-12 * scale
    lam_lo = max(0.0, -lam_s[0])

    def y_of(lam):
        return gh / (2.0 * (lam_s + lam))

    y_hat = None
    if lam_s[0] > tiny:
        y0 = y_of(0.0)
        if np.linalg.norm(y0) <= radius:
            y_hat = y0
    elif lam_s[0] >= -tiny:
        null = lam_s <= tiny
        if np.all(np.abs(gh[null]) <= 1e-12 * max(1.0, np.linalg.norm(gh))):
            y0 = np.where(null, 0.0, gh / (2.0 * np.where(null, 1.0, lam_s)))
            if np.linalg.norm(y0) <= radius:
                y_hat = y0
    if y_hat is None:
        gnorm = np.linalg.norm(gh)
        phi = lambda lam: np.linalg.norm(y_of(lam)) - radius
        lo = lam_lo + max(tiny, 1e-15)
        hi = gnorm / (2.0 * radius) + abs(lam_s[0]) + 1.0
        if gnorm == 0 or phi(lo) < 0:
            # hard case: fill the radius along the bottom eigenvector
            y_hat = np.where(np.abs(lam_s + lam_lo) > tiny, gh / (2.0 * (lam_s + lam_lo + 1e-300)), 0.0)
            rest = radius ** 2 - y_hat @ y_hat
            y_hat[0] += np.sqrt(max(rest, 0.0))
        else:
            lam = brentq(phi, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
            y_hat = y_of(lam)
    return float(value_c + gh @ y_hat - y_hat @ (lam_s * y_hat)), Q @ y_hat


def _affine_parts(fn, dim, rng, what="operator"):
    q = fn(np.zeros(dim))
    M = fn(np.eye(dim)) - q
    M = M.T
    x = rng.standard_normal((3, dim))
    pred = x @ M.T + q
    err = np.max(np.abs(fn(x) - pred))
    if err > 1e-8 * max(1.0, np.max(np.abs(pred))):
        raise NonAffineError(f"{what} is not affine (deviation {err:.3e})")
    return M, q


def _projected_ascent(value_fn, grad_fn, domain, cfg, extra_starts=()):
    rng = np.random.default_rng(cfg.seed)
    starts = [domain.project(np.asarray(cfg.center, dtype=float))]
    starts += [domain.project(np.asarray(s, dtype=float)) for s in extra_starts]
    n_rand = max(cfg.restarts - len(starts), 0)
    if n_rand:
        starts.append(domain.sample(rng, n_rand))
    x = np.vstack([np.atleast_2d(s) for s in starts])

    step = cfg.step
    if step is None:
        a = domain.sample(rng, 32)
        b = domain.sample(rng, 32)
        d = np.linalg.norm(a - b, axis=1)
        ok = d > 0
        ratio = np.linalg.norm(grad_fn(a) - grad_fn(b), axis=1)[ok] / d[ok]
        lip = float(ratio.max()) if ratio.size else 1.0
        step = 1.0 / (2.0 * max(lip, 1e-12))

    best = value_fn(x)
    for _ in range(cfg.iters):
        x_new = domain.project(x + step * grad_fn(x))
        val = value_fn(x_new)
        np.maximum(best, val, out=best)
        moved = np.max(np.abs(x_new - x))
        x = x_new
        if moved < 1e-14:
            break
    return float(best.max())


def restricted_error(test, problem: VIProblem, cfg: MeritConfig):
    """``max_{x in X ∩ B_R(center)} <V(x), test - x>``.

    With ``ProjectedAscent`` the result is the best value found over all
    restarts, hence a lower bound on the true maximum.
    """
    test = as_vector(test, problem.dim)
    domain = _Domain(problem.set, cfg)
    V = problem.operator

    if cfg.inner_solver == CLOSED_FORM:
        if domain.single_ball is None:
            raise ValueError("closed form needs the restricted domain to be a single ball")
        M, q = _affine_parts(V, problem.dim, np.random.default_rng(cfg.seed))
        c = domain.single_ball.center
        value_c = float((M @ c + q) @ (test - c))
        grad_c = M.T @ (test - c) - (M @ c + q)
        val, _ = _trust_region_max(value_c, grad_c, 0.5 * (M + M.T), domain.single_ball.radius)
        return val

    def value_fn(x):
        return np.sum(V(x) * (test - x), axis=-1)

    def grad_fn(x):
        return problem.jacobian_t(x, test - x) - V(x)

    return _projected_ascent(value_fn, grad_fn, domain, cfg, extra_starts=[test])


def restricted_ni_gap(test, problem: VIProblem, cfg: MeritConfig):
    """``max Phi(test_theta, phi) - Phi(theta, test_phi)`` over the restricted domain."""
    if problem.saddle is None:
        raise ValueError("restricted_ni_gap needs a problem with saddle structure")
    if isinstance(test, tuple):
        test = np.concatenate([as_vector(test[0]), as_vector(test[1])])
    test = as_vector(test, problem.dim)
    d1 = problem.saddle.d1
    phi_fn = problem.saddle.objective
    th_hat, ph_hat = test[:d1], test[d1:]
    domain = _Domain(problem.set, cfg)

    def value_fn(z):
        th, ph = z[..., :d1], z[..., d1:]
        return phi_fn(np.broadcast_to(th_hat, th.shape), ph) - phi_fn(th, np.broadcast_to(ph_hat, ph.shape))

    def grad_fn(z):
        th, ph = z[..., :d1], z[..., d1:]
        g_th = problem.operator(np.concatenate([th, np.broadcast_to(ph_hat, ph.shape)], axis=-1))[..., :d1]
        g_ph = problem.operator(np.concatenate([np.broadcast_to(th_hat, th.shape), ph], axis=-1))[..., d1:]
        return -np.concatenate([g_th, g_ph], axis=-1)

    if cfg.inner_solver == CLOSED_FORM:
        if domain.single_ball is None:
            raise ValueError("closed form needs the restricted domain to be a single ball")
        H, _ = _affine_parts(grad_fn, problem.dim, np.random.default_rng(cfg.seed), "NI gradient")
        c = domain.single_ball.center
        val, _ = _trust_region_max(float(value_fn(c)), grad_fn(c), -0.5 * H,
                                   domain.single_ball.radius)
        return val
    return _projected_ascent(value_fn, grad_fn, domain, cfg, extra_starts=[test])


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------

LOGLOG = "loglog"
SEMILOG = "semilog"


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    scale: str
    n_points: int

    def __str__(self):
        return (f"slope={self.slope:.6f} intercept={self.intercept:.6f} "
                f"r2={self.r_squared:.6f} window={self.window[0]:g}:{self.window[1]:g} "
                f"scale={self.scale} n={self.n_points}")


def default_window(t):
    """Drop the first decade of iterations when the series spans two or more."""
    t = np.asarray(t, dtype=float)
    lo, hi = float(t.min()), float(t.max())
    return (10.0 * lo, hi) if hi >= 100.0 * lo else (lo, hi)


def fit_rate(points, scale=LOGLOG, window=None):
    """Least-squares line through ``log value`` against ``log t`` or ``t``.

    ``points`` is a sequence of ``(t, value)`` pairs.  The default window
    is :func:`default_window`.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (t, value) pairs")
    scale = scale.lower()
    if scale not in (LOGLOG, SEMILOG):
        raise ValueError(f"unknown scale {scale!r}")
    lo, hi = window if window is not None else default_window(pts[:, 0])
    sel = pts[(pts[:, 0] >= lo) & (pts[:, 0] <= hi)]
    if sel.shape[0] < 3:
        raise ValueError(f"need at least 3 points in window [{lo:g}, {hi:g}], got {sel.shape[0]}")
    t, v = sel[:, 0], sel[:, 1]
    if np.any(~(v > 0)):
        raise NonPositiveValueError("nonpositive or NaN values inside the fit window")
    y = np.log(v)
    x = np.log(t) if scale == LOGLOG else t
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y))):
        raise DegenerateFitError("series is constant in the window; no rate to fit")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0),
                   (float(lo), float(hi)), scale, int(sel.shape[0]))
