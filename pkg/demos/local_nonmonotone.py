"""
Local convergence in a non-monotone saddle problem
==================================================

The quadratic-quartic saddle with (eps1, eps2) = (1, -1) is not monotone,
yet its Jacobian at the origin has a positive-definite symmetric part.
Started close enough, stochastic PEG stays near the origin and converges
at the 1/t rate.  Run with ``python3 demos/local_nonmonotone.py``.
"""
import numpy as np

from segvi import Ball, InverseLinear, NoiseModel, Oracle, check_regular_solution, probe_monotonicity, sweep
from segvi.merit import LOGLOG, fit_rate
from segvi.problems import make_quad_quartic

p = make_quad_quartic(50, 50, 1.0, -1.0, matrix_seed=0)

# %%
# Non-monotone far away ...
lo, hi = probe_monotonicity(p, 4000, 0, Ball(np.zeros(p.dim), 5.0))
print(f"monotonicity quotients over a radius-5 ball: min {lo:.1f}, max {hi:.1f}")

# %%
# ... but regular at the solution.
r = 0.3
rep = check_regular_solution(p, p.known_solution, r)
print(f"min symmetric eigenvalue at x* = {rep.min_symmetric_eigenvalue:.3f}, "
      f"local modulus on the radius-{r} ball = {rep.local_strong_mono:.3f}")

# %%
# Stochastic PEG from a quarter of the neighborhood radius.
gamma = 1.25 / rep.local_strong_mono
seeds = range(20)
oracles = [Oracle(p, NoiseModel.gaussian(0.01), seed=s) for s in seeds]
u = np.array([np.random.default_rng([s, 7]).standard_normal(p.dim) for s in seeds])
starts = (r / 4) * u / np.linalg.norm(u, axis=1, keepdims=True)
tr = sweep("PEG", p, oracles, InverseLinear(gamma, 15.0), starts, 10_000)

stay = tr.max_lead_dist <= r
print(f"seeds whose lead states never left the ball: {stay.sum()} / {stay.size}")
curve = tr.metrics.dist_sq_last[:, stay].mean(axis=1)
print("loglog fit over staying seeds:",
      fit_rate(np.column_stack([tr.metrics.t, curve]), LOGLOG, (100, 10_000)))
