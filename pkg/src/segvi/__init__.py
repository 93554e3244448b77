"""Extra-gradient and single-call extra-gradient solvers for variational inequalities."""
from .vi_core import (Ball, Box, ConvexSet, MonotonicityClass, NonFiniteError,
                      NotASolutionError, RegularityReport, SaddleStructure, Simplex,
                      VIProblem, WholeSpace, check_regular_solution, eval_operator,
                      probe_lipschitz, probe_monotonicity, project)
from .oracles import NoiseModel, Oracle
from .schedules import Constant, InverseLinear, ScheduleValidation, step_at, validate
from .algorithms import (AlgorithmKind, IterState, Trajectory, init, run, step_eg,
                         step_og, step_peg, step_rg, sweep)
from .merit import (MeritConfig, RateFit, dist_sq, fit_rate, restricted_error,
                    restricted_ni_gap)
from .problems import (QuadQuarticSaddle, linear_problem, make_bilinear,
                       make_quad_quartic, make_strongly_monotone_quadratic, zero_problem)

__version__ = "0.1.0"
