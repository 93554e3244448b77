"""
A short tour of segvi
=====================

Run with ``python3 demos/tour.py``.  Everything printed here is computed
on the spot; nothing is cached.
"""
import numpy as np

from segvi import Constant, InverseLinear, NoiseModel, Oracle, run, sweep, validate
from segvi.merit import LOGLOG, SEMILOG, MeritConfig, fit_rate, restricted_error
from segvi.problems import make_bilinear, make_quad_quartic, make_strongly_monotone_quadratic

# %%
# Four methods, one problem
# -------------------------
# A strongly monotone quadratic V(x) = Qx in dimension 20.  EG spends two
# oracle calls per iteration, the single-call methods one.
p = make_strongly_monotone_quadratic(20, alpha=1.0, lipschitz=4.0, seed=0)
x0 = np.random.default_rng(0).standard_normal(p.dim)
gamma = Constant(1 / (4 * p.lipschitz))
for kind in ("EG", "PEG", "RG", "OG"):
    tr = run(kind, p, None, gamma, x0, 500)
    print(f"{kind:>3}: |X_T - x*|^2 = {tr.metrics.dist_sq_last[-1]:.3e}  "
          f"oracle calls = {tr.oracle_calls}")

# %%
# Without constraints and with zero initial feedback, PEG, RG and OG
# produce the same base iterates.
b = {k: run(k, p, None, gamma, x0, 500, keep_states=True).bases() for k in ("PEG", "RG", "OG")}
print("max |PEG - RG| =", np.abs(b["PEG"] - b["RG"]).max(),
      " max |PEG - OG| =", np.abs(b["PEG"] - b["OG"]).max())

# %%
# Geometric decay
# ---------------
# On the strongly monotone regime of the quadratic-quartic saddle the
# distance decays geometrically: a straight line in semilog coordinates.
q = make_quad_quartic(50, 50, 1.0, 0.0)
tr = run("PEG", q, None, Constant(1 / (4 * q.lipschitz)), np.full(q.dim, 0.1), 2000,
         record="all")
fit = fit_rate(np.column_stack([tr.metrics.t, np.sqrt(tr.metrics.dist_sq_last)]), SEMILOG,
               (50, 2000))
print("semilog fit of |X_t - x*|:", fit)

# %%
# Ergodic O(1/t) on a bilinear game
# ---------------------------------
# Monotone but not strongly monotone: the last iterate of PEG need not
# settle fast, the ergodic average does, measured by the restricted error.
g = make_bilinear(5, seed=1)
x1 = np.random.default_rng(1).standard_normal(g.dim)
step = 0.9 / (2 * g.lipschitz)
print(validate(Constant(step), g, "PEG", "DetErgodic"))
cfg = MeritConfig.around_start(g, x1, inner_solver="ClosedFormAffine")
tr = run("PEG", g, None, Constant(step), x1, 2000, record=[10, 100, 1000, 2000], warm=True,
         merit=cfg)
for t, e in zip(tr.metrics.t, tr.metrics.err_res):
    print(f"  t = {t:5d}  Err_R(ergodic lead) = {e:.3e}  bound = {cfg.radius ** 2 / (2 * step * t):.3e}")
print("  Err_R at the solution:", restricted_error(g.known_solution, g, cfg))

# %%
# Noisy feedback, diminishing steps
# ---------------------------------
# gamma_t = gamma / (t + b) with gamma > 1/alpha and b >= 4 L gamma.  The
# seed-averaged squared distance then falls like 1/t.
sched = InverseLinear(2.0, 32.0)
print(validate(sched, p, "PEG", "StochGlobal"))
seeds = range(20)
oracles = [Oracle(p, NoiseModel.gaussian(0.01), seed=s) for s in seeds]
starts = np.array([0.1 * np.random.default_rng([s, 7]).standard_normal(p.dim) for s in seeds])
tr = sweep("PEG", p, oracles, sched, starts, 20_000)
curve = tr.metrics.dist_sq_last.mean(axis=1)
print("loglog fit of E|X_t - x*|^2:", fit_rate(np.column_stack([tr.metrics.t, curve]), LOGLOG,
                                                (1e3, 2e4)))
