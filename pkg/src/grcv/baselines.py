"""Comparison methods: grid search (G-S) and inexact cross-validation (In-CV).

Grid search trains every fold at every grid value and keeps the value with
the lowest mean validation error. In-CV solves one relaxed problem at a fixed
tolerance instead of following the relaxation schedule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, SplitSpec
from .grm import GrmOptions, Instance, MethodResult, final_classifier, prepare_instance, rescale_C
from .mpec import eval_F, vio, zeta_loss_lp
from .nlp_solver import RelaxedProblem, solve_relaxed
from .svc_lower import SvcOptions, train_l1_svc

__all__ = ["GridSpec", "DEFAULT_GRID", "grid_search", "grid_cv_errors", "inexact_cv"]

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(10.0**k for k in range(-4, 5))


@dataclass(frozen=True)
class GridSpec:
    C_values: tuple = DEFAULT_GRID

    def __post_init__(self):
        vals = tuple(float(c) for c in self.C_values)
        if not vals:
            raise ValueError("grid must be nonempty")
        if any(not np.isfinite(c) or c < 0 for c in vals):
            raise ValueError("grid values must be finite and nonnegative")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("grid values must be strictly increasing")
        object.__setattr__(self, "C_values", vals)

    @classmethod
    def from_values(cls, values) -> "GridSpec":
        """Build from any iterable, sorting and dropping duplicates."""
        return cls(tuple(sorted(set(float(c) for c in values))))

    def __len__(self):
        return len(self.C_values)


def grid_cv_errors(inst: Instance, grid: GridSpec, svc_opts: SvcOptions | None = None):
    """Validation error counts per (C, fold) and total trainer iterations.

    A validation row ``a = y x`` counts as an error only when ``a.w < 0``;
    points on the hyperplane are counted as correct, as in the MPEC objective.
    """
    fm = inst.problem.folds
    errors = np.zeros((len(grid), fm.T), dtype=int)
    iters = 0
    for i, C in enumerate(grid.C_values):
        for t in range(fm.T):
            sol = train_l1_svc(fm.B[t], C, svc_opts)
            iters += sol.iterations
            errors[i, t] = int(zeta_loss_lp(-(fm.A[t] @ sol.w)).sum())
    return errors, iters


def grid_search(
    ds: Dataset,
    spec: SplitSpec,
    grid: GridSpec | None = None,
    *,
    rescale: bool = False,
    svc_opts: SvcOptions | None = None,
    instance: Instance | None = None,
) -> MethodResult:
    """Grid-search cross-validation; ties go to the smallest ``C``."""
    grid = grid or GridSpec()
    inst = instance or prepare_instance(ds, spec)
    errors, iters = grid_cv_errors(inst, grid, svc_opts)
    p = inst.problem
    cv_err = errors.sum(axis=1) / (p.T * p.m1)
    best = int(np.argmin(cv_err))  # first minimum, grid is increasing
    C_best = grid.C_values[best]
    C_final = rescale_C(C_best, spec.T) if rescale else C_best
    w, E_t = final_classifier(inst, C_final, svc_opts)
    return MethodResult(
        "G-S", C_best, C_final, w, E_t, float(cv_err[best]), None, errors.size, iters,
        {"grid": list(grid.C_values), "cv_errors": cv_err.tolist()},
    )


def inexact_cv(
    ds: Dataset,
    spec: SplitSpec,
    tol: float = 1e-4,
    grm_opts: GrmOptions | None = None,
    *,
    rescale: bool = True,
    svc_opts: SvcOptions | None = None,
    instance: Instance | None = None,
) -> MethodResult:
    """Single relaxed solve at ``t = tol`` from the initial point, then GR-CV post-processing."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    grm_opts = grm_opts or GrmOptions()
    inst = instance or prepare_instance(ds, spec)
    p = inst.problem
    v0 = p.initial_point().v if grm_opts.v0 is None else np.asarray(grm_opts.v0, dtype=float)
    res = solve_relaxed(RelaxedProblem(p, tol, grm_opts.C_max), v0, grm_opts.solver)
    if not res.converged:
        log.warning("In-CV solve at tol=%g: %s", tol, res.status)
    v = res.point.v
    C_hat = float(v[0])
    C_final = rescale_C(C_hat, spec.T) if rescale else C_hat
    w, E_t = final_classifier(inst, max(C_final, 0.0), svc_opts)
    return MethodResult(
        "In-CV", C_hat, C_final, w, E_t, eval_F(p, v), vio(p, v), 1, res.iterations,
        {"tol": tol, "status": res.status, "flagged": not res.converged},
    )
