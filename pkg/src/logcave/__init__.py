"""Log-concave maximum likelihood density estimation (and its s-concave and
quasi-concave generalizations) by smoothed accelerated dual averaging over
integration grids of increasing size."""

from .envelopes import (EnvelopeInterpolator, EnvelopeLP, EnvelopeQP,
                        EnvelopeSolution, WeightPolytope, cef_lp, cef_qp)
from .errors import (DegenerateData, DomainViolation, DuplicatePoints,
                     EmptyGrid, Infeasible, LogcaveError, NoConvergence,
                     NonFiniteIterate, NumericalInstability, ParseError)
from .generalized import (GeneralizedObjective, eval_renyi, eval_s_mle,
                          fit_generalized, rescaled_tent)
from .grids import (Grid, GridFactory, GridSchedule, make_grid,
                    schedule_diagnostics, schedule_size)
from .hull import (Dataset, Hull, axis_grid_inside, build_hull, contains,
                   make_dataset, sample_uniform)
from .objective import (ObjectiveReport, TentVector, eval_exact, eval_grid,
                        exp_divided_difference, prop1_bounds,
                        subgradient_norm_bound)
from .rng import RngStream
from .smoothing import (GradientEstimate, SmoothingConfig, ball_sample,
                        nesterov_value_grad, randomized_value_grad,
                        shifted_value, smoothing_constants)
from .solver import (FittedModel, ReferenceResult, RunRecord, SolverConfig,
                     SolverState, fit, initialize_nonconvex, polish,
                     reference_solve, theta_next)

__version__ = "0.1.0"
