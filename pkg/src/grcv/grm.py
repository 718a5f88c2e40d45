"""Global relaxation method and the GR-CV pipeline.

``run_grm`` solves the relaxed problems for ``t_0, sigma*t_0, ...`` while
``t_k > t_min``, warm-starting each solve at the previous result.
``gr_cv`` wraps it: split, build folds, solve, rescale ``C`` by ``T/(T-1)``,
train the final classifier on the whole CV subset and score it on the
hold-out set.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, FoldPartition, SplitSpec, build_fold_matrices, dense_rows, make_folds, split_holdout
from .mpec import MpecPoint, MpecProblem, assemble_mpec, eval_F, vio
from .nlp_solver import RelaxedProblem, SolverOptions, solve_relaxed
from .svc_lower import SvcOptions, misclassification_count, train_l1_svc

__all__ = [
    "GrmOptions",
    "GrmTrace",
    "Instance",
    "MethodResult",
    "relaxation_schedule",
    "run_grm",
    "prepare_instance",
    "final_classifier",
    "rescale_C",
    "gr_cv",
]

log = logging.getLogger(__name__)


@dataclass
class GrmOptions:
    t0: float = 1.0
    sigma: float = 0.01
    t_min: float = 1e-8
    v0: np.ndarray | None = None  # default [1, 0, ..., 0]
    C_max: float = 1e6  # upper bound on C inside the relaxed problems
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.t_min > 0:
            raise ValueError("t_min must be positive")
        if not self.C_max > 0:
            raise ValueError("C_max must be positive")


def relaxation_schedule(t0: float, sigma: float, t_min: float) -> list[float]:
    """Relaxation values visited by the loop ``while t > t_min: ...; t = sigma * t``.

    The update is the floating-point product, applied repeatedly; with the
    defaults (1, 0.01, 1e-8) the fourth product is 1.0000000000000002e-08,
    which still exceeds ``t_min``, so five values are visited.
    """
    ts = []
    t = float(t0)
    while t > t_min:
        ts.append(t)
        t = sigma * t
    return ts


@dataclass
class GrmTrace:
    t_values: list
    stages: list
    v_opt: np.ndarray
    F: float
    vio: float
    flagged: bool = False

    @property
    def k(self) -> int:
        return len(self.stages)

    @property
    def it(self) -> int:
        return sum(s["iterations"] for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "t_values": list(self.t_values),
            "stages": self.stages,
            "k": self.k,
            "it": self.it,
            "C": float(self.v_opt[0]),
            "F": self.F,
            "vio": self.vio,
            "flagged": self.flagged,
            "v_opt": self.v_opt.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def run_grm(p: MpecProblem, opts: GrmOptions | None = None) -> GrmTrace:
    """Solve the relaxed problems along the schedule, chaining warm starts."""
    opts = opts or GrmOptions()
    if opts.v0 is None:
        v = p.initial_point().v
    else:
        v = np.asarray(opts.v0.v if isinstance(opts.v0, MpecPoint) else opts.v0, dtype=float).copy()
        if v.shape != (p.size,):
            raise ValueError(f"v0 has length {v.shape}, expected {p.size}")
    ts = relaxation_schedule(opts.t0, opts.sigma, opts.t_min)
    stages = []
    flagged = False
    for t in ts:
        res = solve_relaxed(RelaxedProblem(p, t, opts.C_max), v, opts.solver)
        stages.append({"t": t, **res.summary()})
        if not res.converged:
            flagged = True
            log.warning("GRM stage t=%g: %s, continuing from best iterate", t, res.status)
        v = res.point.v
    return GrmTrace(ts, stages, v.copy(), eval_F(p, v), vio(p, v), flagged)


@dataclass
class Instance:
    """Everything derived from a dataset and a split before any solve."""

    ds: Dataset
    spec: SplitSpec
    cv_idx: np.ndarray
    test_idx: np.ndarray
    folds: FoldPartition
    problem: MpecProblem


def prepare_instance(ds: Dataset, spec: SplitSpec) -> Instance:
    cv_idx, test_idx = split_holdout(ds, spec)
    folds = make_folds(cv_idx, spec.T)
    fm = build_fold_matrices(ds, folds)
    return Instance(ds, spec, cv_idx, test_idx, folds, assemble_mpec(fm))


@dataclass
class MethodResult:
    method: str
    C_hat: float
    C_final: float
    w: np.ndarray
    E_t: float
    E_C: float
    vio: float | None
    k: int
    it: int
    extra: dict = field(default_factory=dict)

    def row(self, dataset: str) -> dict:
        """Summary row in the fixed column order of the comparison table."""
        return {
            "Dataset": dataset,
            "Method": self.method,
            "E_t(%)": _pct(self.E_t),
            "E_C(%)": _pct(self.E_C),
            "Vio": "-" if self.vio is None else f"{self.vio:.2e}",
            "k": self.k,
            "it": self.it,
        }

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "C_hat": self.C_hat,
            "C_final": self.C_final,
            "w": self.w.tolist(),
            "E_t": self.E_t,
            "E_C": self.E_C,
            "vio": self.vio,
            "k": self.k,
            "it": self.it,
            **self.extra,
        }


def _pct(x: float) -> str:
    return "nan" if math.isnan(x) else f"{100.0 * x:.2f}"


def final_classifier(inst: Instance, C: float, svc_opts: SvcOptions | None = None) -> tuple[np.ndarray, float]:
    """Train on the whole CV subset at ``C``; return ``(w, test error)``."""
    B = dense_rows(inst.ds, inst.cv_idx)
    w = train_l1_svc(B, C, svc_opts).w
    if len(inst.test_idx) == 0:
        return w, float("nan")
    X = inst.ds.design(inst.test_idx)
    y = inst.ds.labels[inst.test_idx]
    return w, misclassification_count(w, X, y) / len(inst.test_idx)


def rescale_C(C: float, T: int) -> float:
    """Scale a C tuned on (T-1)/T of the data up to the full CV subset."""
    return C * T / (T - 1)


def gr_cv(
    ds: Dataset,
    spec: SplitSpec,
    grm_opts: GrmOptions | None = None,
    *,
    rescale: bool = True,
    svc_opts: SvcOptions | None = None,
    instance: Instance | None = None,
) -> MethodResult:
    """Bilevel cross-validation by the global relaxation method."""
    inst = instance or prepare_instance(ds, spec)
    trace = run_grm(inst.problem, grm_opts)
    C_hat = float(trace.v_opt[0])
    T = spec.T
    C_final = rescale_C(C_hat, T) if rescale else C_hat
    w, E_t = final_classifier(inst, max(C_final, 0.0), svc_opts)
    return MethodResult(
        "GR-CV", C_hat, C_final, w, E_t, trace.F, trace.vio, trace.k, trace.it,
        {"trace": trace.to_dict(), "flagged": trace.flagged},
    )
