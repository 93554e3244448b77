"""Stochastic first-order oracles ``V_t = V(x) + U_t``.

Noise is counter-based: the Gaussian vector for a query is a pure function of
``(seed, run_id, t, phase, coordinate)``, where the pair ``(t, phase)``
encodes the half-integer iteration index (phase 0 for the base state ``X_t``,
phase 1 for the leading state ``X_{t+1/2}``).  The Philox key is
``(seed, run_id)``; the phase selects a separate counter word, so each phase
is a contiguous stream in ``t``.  Any single query can therefore be replayed
exactly, and ranges of iterations can be generated in one block.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .vi_core import NonFiniteError, VIProblem

BASE, LEAD = 0, 1
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class NoiseModel:
    """``kind`` is ``"none"`` or ``"gaussian"`` (iid per coordinate)."""

    kind: str = "none"
    variance_per_coord: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance_per_coord > 0:
            raise ValueError("gaussian noise needs a positive variance")

    @classmethod
    def gaussian(cls, variance_per_coord):
        return cls("gaussian", float(variance_per_coord))

    @property
    def is_zero(self):
        return self.kind == "none"

    def total_variance(self, dim):
        """``E||U||^2``."""
        return 0.0 if self.is_zero else dim * self.variance_per_coord


def _uniforms(words):
    # 53 high bits, shifted off zero so log() is always finite
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def gaussian_block(seed, run_id, t_start, n_slots, dim, phase=LEAD):
    """Standard normals for iterations ``t_start .. t_start + n_slots - 1`` of
    one phase, shape ``(n_slots, dim)``."""
    pairs = (dim + 1) // 2
    words_per_slot = 2 * pairs
    blocks_per_slot = -(-words_per_slot // 4)
    bitgen = np.random.Philox(
        key=np.array([int(seed) & _MASK64, int(run_id) & _MASK64], dtype=np.uint64),
        counter=np.array([int(t_start) * blocks_per_slot, 0, int(phase), 0], dtype=np.uint64),
    )
    raw = bitgen.random_raw(n_slots * blocks_per_slot * 4)
    raw = raw.reshape(n_slots, blocks_per_slot * 4)[:, :words_per_slot]
    u = _uniforms(raw).reshape(n_slots, pairs, 2)
    r = np.sqrt(-2.0 * np.log(u[..., 0]))
    ang = _TWO_PI * u[..., 1]
    z = np.empty((n_slots, pairs, 2))
    z[..., 0] = r * np.cos(ang)
    z[..., 1] = r * np.sin(ang)
    return z.reshape(n_slots, 2 * pairs)[:, :dim]


class Oracle:
    """Noisy operator feedback with call accounting.

    ``call_count`` is incremented under a lock so the same oracle may be
    queried from several threads; each run must use its own ``run_id``.
    """

    def __init__(self, problem: VIProblem, noise: NoiseModel | None = None, seed=0):
        self.problem = problem
        self.noise = noise if noise is not None else NoiseModel()
        self.seed = int(seed)
        self._calls = 0
        self._lock = threading.Lock()

    def __repr__(self):
        return f"Oracle({self.problem.name!r}, {self.noise}, seed={self.seed})"

    @property
    def call_count(self):
        return self._calls

    def _count(self, n=1):
        with self._lock:
            self._calls += n

    def noise_at(self, run_id, t, phase=LEAD, n_slots=1):
        """Noise vectors for iterations ``t .. t + n_slots - 1`` of ``phase``."""
        d = self.problem.dim
        if self.noise.is_zero:
            return np.zeros((n_slots, d))
        z = gaussian_block(self.seed, run_id, t, n_slots, d, phase)
        return np.sqrt(self.noise.variance_per_coord) * z

    def query(self, x, stream_key=(0, 0, LEAD)):
        """Return ``V(x) + U`` for ``stream_key = (run_id, t, phase)``."""
        run_id, t, phase = stream_key
        v = np.asarray(self.problem.operator(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("operator returned non-finite values",
                                 np.flatnonzero(~np.isfinite(v)))
        self._count()
        if self.noise.is_zero:
            return v
        return v + self.noise_at(run_id, t, phase)[0]

    def variance_estimate(self, x, n, run_id=-1):
        """Unbiased estimate of ``E||U||^2`` from ``n`` fresh draws at ``x``.

        Draws come from a dedicated stream (``run_id=-1`` by default) so they
        never collide with algorithm queries.
        """
        if n < 2:
            raise ValueError("n must be >= 2")
        if self.noise.is_zero:
            return 0.0
        v = np.asarray(self.problem.operator(np.asarray(x, dtype=float)), dtype=float)
        samples = v + self.noise_at(run_id, 0, BASE, n)
        self._count(n)
        dev = samples - samples.mean(axis=0)
        return float(np.sum(dev * dev) / (n - 1))


class BatchFeedback:
    """Feedback for a stack of independent runs, one oracle per row.

    Noise is prefetched in chunks of iterations, separately per phase;
    values are identical to what :meth:`Oracle.query` would return for the
    same keys.
    """

    def __init__(self, oracles, run_id=0, chunk=512):
        self.oracles = list(oracles)
        if not self.oracles:
            raise ValueError("need at least one oracle")
        self.problem = self.oracles[0].problem
        self.noisy = not self.oracles[0].noise.is_zero
        self.run_id = run_id
        self.chunk = chunk
        self._bufs = {}

    def _noise(self, t, phase):
        start, buf = self._bufs.get(phase, (None, None))
        if buf is None or not (start <= t < start + self.chunk):
            start = t
            buf = np.stack([o.noise_at(self.run_id, t, phase, self.chunk)
                            for o in self.oracles], axis=1)
            self._bufs[phase] = (start, buf)
        return buf[t - start]

    def __call__(self, x, t, phase):
        v = self.problem.operator(x)
        for o in self.oracles:
            o._count()
        if self.noisy:
            v = v + self._noise(t, phase)
        return v
