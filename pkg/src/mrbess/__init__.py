"""Sparse reduced-rank regression via primal-dual active-set iteration (MrBeSS)."""

from .criteria import gic, gic_penalty
from .model import (Dataset, FitResult, GramPolicy, IterationTrace, MetricsRecord,
                    SingularGramError, SolverConfig, compute_metrics,
                    denormalize_coefficients, validate_and_normalize)
from .rrr import (PrimalDualState, RankDeficiencyWarning, primal_dual_update,
                  restricted_gram_inverse, rrr_restricted_fit, sacrifices,
                  top_r_right_factors)
from .solver import fit_arrays, init_active_set, select_active, solve_fixed
from .tuning import (GicRecord, TuneReport, tune_gic, tune_grid_gic,
                     tune_validation)

__version__ = "0.1.0"
