"""Benchmark problems.

The main family is the quadratic-quartic saddle

    Phi(theta, phi) = 2 e1 theta'A1 theta + e2 (theta'A2 theta)^2
                      - 2 e1 phi'B1 phi - e2 (phi'B2 phi)^2 + 4 theta'C phi

whose operator is ``V = (grad_theta Phi, -grad_phi Phi)``.  Its three
regimes ``(e1, e2) = (1, 0), (0, 1), (1, -1)`` are strongly monotone,
monotone, and non-monotone with a regular solution at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vi_core import (ConvexSet, MonotonicityClass, SaddleStructure, VIProblem,
                      WholeSpace)


def _regime_class(eps1, eps2):
    if eps2 == 0 and eps1 > 0:
        return MonotonicityClass.STRONGLY_MONOTONE
    if eps1 >= 0 and eps2 >= 0:
        return MonotonicityClass.MONOTONE
    if eps1 > 0 and eps2 < 0:
        return MonotonicityClass.NON_MONOTONE_REGULAR
    return MonotonicityClass.UNKNOWN


def _spd(rng, d, conditioning):
    m = rng.standard_normal((d, d))
    return m.T @ m / d + conditioning * np.eye(d)


@dataclass(eq=False)
class QuadQuarticSaddle:
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("A1", "A2", "B1", "B2"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
            setattr(self, name, 0.5 * (m + m.T))
        self.C = np.asarray(self.C, dtype=float)
        if self.C.shape != (self.d1, self.d2) or self.A2.shape[0] != self.d1 or self.B2.shape[0] != self.d2:
            raise ValueError("inconsistent block shapes")

    @property
    def d1(self):
        return self.A1.shape[0]

    @property
    def d2(self):
        return self.B1.shape[0]

    @property
    def dim(self):
        return self.d1 + self.d2

    def split(self, x):
        return x[..., :self.d1], x[..., self.d1:]

    def objective(self, th, ph):
        qa = np.sum(th * (th @ self.A1), axis=-1)
        qa2 = np.sum(th * (th @ self.A2), axis=-1)
        qb = np.sum(ph * (ph @ self.B1), axis=-1)
        qb2 = np.sum(ph * (ph @ self.B2), axis=-1)
        cross = np.sum(th * (ph @ self.C.T), axis=-1)
        return 2 * self.eps1 * qa + self.eps2 * qa2 ** 2 - 2 * self.eps1 * qb - self.eps2 * qb2 ** 2 + 4 * cross

    def operator(self, x):
        th, ph = self.split(np.asarray(x, dtype=float))
        a2t = th @ self.A2
        b2p = ph @ self.B2
        qa2 = np.sum(th * a2t, axis=-1)[..., None]
        qb2 = np.sum(ph * b2p, axis=-1)[..., None]
        v_th = 4 * self.eps1 * (th @ self.A1) + 4 * self.eps2 * qa2 * a2t + 4 * (ph @ self.C.T)
        v_ph = 4 * self.eps1 * (ph @ self.B1) + 4 * self.eps2 * qb2 * b2p - 4 * (th @ self.C)
        return np.concatenate([v_th, v_ph], axis=-1)

    def vjp(self, x, w):
        """``J_V(x)^T w``."""
        th, ph = self.split(np.asarray(x, dtype=float))
        w_th, w_ph = self.split(np.asarray(w, dtype=float))
        a2t = th @ self.A2
        b2p = ph @ self.B2
        qa2 = np.sum(th * a2t, axis=-1)[..., None]
        qb2 = np.sum(ph * b2p, axis=-1)[..., None]
        out_th = (4 * self.eps1 * (w_th @ self.A1) + 4 * self.eps2 * qa2 * (w_th @ self.A2)
                  + 8 * self.eps2 * a2t * np.sum(a2t * w_th, axis=-1)[..., None]
                  - 4 * (w_ph @ self.C.T))
        out_ph = (4 * self.eps1 * (w_ph @ self.B1) + 4 * self.eps2 * qb2 * (w_ph @ self.B2)
                  + 8 * self.eps2 * b2p * np.sum(b2p * w_ph, axis=-1)[..., None]
                  + 4 * (w_th @ self.C))
        return np.concatenate([out_th, out_ph], axis=-1)

    def jacobian(self, x):
        # row i of the stack is J^T e_i, i.e. row i of J
        return self.vjp(np.broadcast_to(x, (self.dim, self.dim)), np.eye(self.dim))

    def linear_part(self):
        """Jacobian at the origin, ``[[4 e1 A1, 4C], [-4C', 4 e1 B1]]``."""
        return np.block([[4 * self.eps1 * self.A1, 4 * self.C],
                         [-4 * self.C.T, 4 * self.eps1 * self.B1]])

    def lipschitz_bound(self, radius):
        """Upper bound on the Lipschitz constant of V over the origin ball of ``radius``."""
        lin = np.linalg.norm(self.linear_part(), 2)
        quart = 12 * abs(self.eps2) * max(np.linalg.norm(self.A2, 2), np.linalg.norm(self.B2, 2)) ** 2
        return float(lin + quart * radius ** 2)

    def to_problem(self, lipschitz_radius=1.0, name=None):
        cls = _regime_class(self.eps1, self.eps2)
        alpha = None
        if cls is MonotonicityClass.STRONGLY_MONOTONE:
            alpha = 4 * self.eps1 * min(np.linalg.eigvalsh(self.A1)[0], np.linalg.eigvalsh(self.B1)[0])
        elif cls is MonotonicityClass.MONOTONE:
            alpha = 4 * self.eps1 * min(np.linalg.eigvalsh(self.A1)[0], np.linalg.eigvalsh(self.B1)[0]) if self.eps1 > 0 else 0.0
        linear = self.eps2 == 0
        return VIProblem(
            dim=self.dim,
            operator=self.operator,
            set=WholeSpace(self.dim),
            lipschitz=self.lipschitz_bound(0.0 if linear else lipschitz_radius),
            strong_mono=alpha,
            known_solution=np.zeros(self.dim),
            monotonicity_class=cls,
            vjp=self.vjp,
            affine=linear,
            saddle=SaddleStructure(self.objective, self.d1),
            lipschitz_radius=None if linear else lipschitz_radius,
            name=name or f"quad_quartic(eps1={self.eps1:g}, eps2={self.eps2:g}, d={self.d1}x{self.d2})",
            info={"source": self},
        )


def make_quad_quartic(d1, d2, eps1, eps2, matrix_seed=0, conditioning=0.5, lipschitz_radius=1.0):
    """Seeded instance of the quadratic-quartic saddle as a :class:`VIProblem`.

    SPD blocks are ``M'M/d + conditioning*I`` with Gaussian ``M``; ``C`` is
    Gaussian scaled by ``1/sqrt(d)``.  For the quartic regimes the recorded
    ``lipschitz`` is an upper bound valid on the origin ball of radius
    ``lipschitz_radius``.
    """
    if d1 < 1 or d2 < 1:
        raise ValueError("block dimensions must be positive")
    if not conditioning > 0:
        raise ValueError("conditioning must be positive")
    rng = np.random.default_rng(matrix_seed)
    A1 = _spd(rng, d1, conditioning)
    A2 = _spd(rng, d1, conditioning)
    B1 = _spd(rng, d2, conditioning)
    B2 = _spd(rng, d2, conditioning)
    C = rng.standard_normal((d1, d2)) / np.sqrt(max(d1, d2))
    return QuadQuarticSaddle(A1, A2, B1, B2, C, eps1, eps2).to_problem(lipschitz_radius)


def linear_problem(M, q=None, cset: ConvexSet | None = None, name="linear", **kw):
    """``V(x) = M x + q``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = M.shape[0]
    q = np.zeros(d) if q is None else np.asarray(q, dtype=float)
    MT = M.T.copy()
    return VIProblem(
        dim=d,
        operator=lambda x: np.asarray(x, dtype=float) @ MT + q,
        set=cset if cset is not None else WholeSpace(d),
        vjp=lambda x, w: np.asarray(w, dtype=float) @ M,
        affine=True,
        name=name,
        info={"matrix": M, "offset": q},
        **kw,
    )


def zero_problem(dim, cset=None):
    """``V = 0``: every feasible point solves it; the origin is recorded when feasible."""
    cset = cset if cset is not None else WholeSpace(dim)
    origin = np.zeros(dim)
    return linear_problem(np.zeros((dim, dim)), cset=cset, name="zero", lipschitz=None,
                          strong_mono=0.0, monotonicity_class=MonotonicityClass.MONOTONE,
                          known_solution=origin if cset.contains(origin) else None)


def make_strongly_monotone_quadratic(dim, alpha, lipschitz, seed=0):
    """``V(x) = Q x`` with ``lambda_min((Q+Q')/2) = alpha`` and ``||Q||_2 <= lipschitz``.

    The symmetric part has spectrum in ``[alpha, (alpha+L)/2]``; a random
    antisymmetric part is scaled (by bisection) so that ``||Q||_2 = L`` when
    reachable.  The recorded constants are the exact ones of ``Q``.
    """
    if not (0 < alpha <= lipschitz):
        raise ValueError("need 0 < alpha <= lipschitz")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    spec = np.linspace(alpha, 0.5 * (alpha + lipschitz), dim) if dim > 1 else np.array([alpha])
    S = (U * spec) @ U.T
    S = 0.5 * (S + S.T)
    G = rng.standard_normal((dim, dim))
    K = G - G.T
    kn = np.linalg.norm(K, 2)
    Q = S
    if dim > 1 and kn > 0 and np.linalg.norm(S, 2) < lipschitz:
        K = K / kn
        lo, hi = 0.0, 2.0 * lipschitz
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(S + mid * K, 2) > lipschitz:
                hi = mid
            else:
                lo = mid
        Q = S + lo * K
    lip = float(np.linalg.norm(Q, 2))
    a = float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])
    return linear_problem(
        Q, name=f"strongly_monotone_quadratic(dim={dim}, alpha={alpha:g}, L={lipschitz:g})",
        lipschitz=lip, strong_mono=a, known_solution=np.zeros(dim),
        monotonicity_class=MonotonicityClass.STRONGLY_MONOTONE,
    )


def make_bilinear(dim, seed=0, cset: ConvexSet | None = None):
    """``Phi(theta, phi) = theta' M phi`` with ``theta, phi`` in ``R^dim``."""
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    J = np.block([[np.zeros((dim, dim)), M], [-M.T, np.zeros((dim, dim))]])
    cset = cset if cset is not None else WholeSpace(2 * dim)
    origin = np.zeros(2 * dim)
    sol = origin if cset.contains(origin) else None

    def objective(th, ph):
        return np.sum(th * (ph @ M.T), axis=-1)

    return linear_problem(
        J, cset=cset, name=f"bilinear(dim={dim})",
        lipschitz=float(np.linalg.norm(M, 2)), strong_mono=0.0, known_solution=sol,
        monotonicity_class=MonotonicityClass.MONOTONE,
        saddle=SaddleStructure(objective, dim),
    )
