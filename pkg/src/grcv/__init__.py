"""Bilevel cross-validation for the l1-loss linear SVC.

The hyperparameter ``C`` is chosen by solving the MPEC reformulation of the
bilevel cross-validation problem with a global (Scholtes) relaxation method.
Grid search and a single-relaxation variant are provided for comparison.
"""

from .baselines import GridSpec, grid_search, inexact_cv
from .dataset import Dataset, SplitSpec, load_libsvm, parse_libsvm
from .grm import GrmOptions, gr_cv, run_grm
from .mpec import MpecProblem, assemble_mpec
from .nlp_solver import RelaxedProblem, SolverOptions, solve_relaxed
from .svc_lower import SvcOptions, train_l1_svc

__all__ = [
    "Dataset",
    "GridSpec",
    "GrmOptions",
    "MpecProblem",
    "RelaxedProblem",
    "SolverOptions",
    "SplitSpec",
    "SvcOptions",
    "assemble_mpec",
    "gr_cv",
    "grid_search",
    "inexact_cv",
    "load_libsvm",
    "parse_libsvm",
    "run_grm",
    "solve_relaxed",
    "train_l1_svc",
]
