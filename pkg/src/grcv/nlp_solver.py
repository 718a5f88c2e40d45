"""Interior-point solver for the relaxed subproblem

    min  M^T v   s.t.  G(v) >= 0,  H(v) >= 0,  t - G_i(v) H_i(v) >= 0.

Constraints ``c(v) >= 0`` are handled in elastic form, ``c(v) + e >= 0`` with
``e >= 0`` and a penalty ``rho * sum(e)``, so any iterate can be made strictly
feasible for the barrier. Each iteration takes a primal-dual Newton step on
the barrier KKT system reduced to the ``v`` block; the reduced matrix is dense
(size ``m_bar + 1``) and factored by Cholesky with a diagonal shift when it is
not positive definite. Steps use a fraction-to-boundary rule and an Armijo
backtrack on the barrier function.

Warm starts that violate the constraints (the default ``[1, 0, ..., 0]`` or the
previous stage's point when ``t`` shrinks) are first moved to a strictly
interior point built from exact lower-level solutions at the same ``C``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mpec import MpecPoint, MpecProblem, eval_G, eval_H, interior_point

__all__ = [
    "RelaxedProblem",
    "SolverOptions",
    "SolverResult",
    "solve_relaxed",
    "kkt_residual_nlp",
    "constraint_values",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelaxedProblem:
    mpec: MpecProblem
    t: float
    C_max: float = 1e6  # safeguard: C is unbounded along flat directions (e.g. separable folds)

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"relaxation parameter must be positive, got {self.t}")
        if not self.C_max > 0:
            raise ValueError(f"C_max must be positive, got {self.C_max}")


@dataclass
class SolverOptions:
    stat_tol: float = 1e-6
    feas_tol: float = 1e-8
    max_iters: int = 500
    mu0: float | None = None  # default: min(0.1, t)
    mu_decrease: float = 0.2
    mu_power: float = 1.5
    barrier_kappa: float = 10.0
    tau_min: float = 0.99
    armijo: float = 1e-4
    max_backtracks: int = 40
    elastic_penalty: float = 1e4
    lift: bool = True  # rebuild infeasible warm starts as interior points
    trace: object = None  # path or writable stream for JSON-lines trace

    def __post_init__(self):
        for name in ("stat_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.mu_decrease < 1:
            raise ValueError("mu_decrease must be in (0, 1)")



@dataclass
class SolverResult:
    point: MpecPoint
    status: str
    kkt_residual: float
    iterations: int
    objective: float
    multipliers: np.ndarray = field(repr=False, default=None)
    infeasibility: float = 0.0
    mu: float = 0.0
    state: dict | None = field(repr=False, default=None)  # internal iterate for exact restarts

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary(self) -> dict:
        return {
            "status": self.status,
            "kkt_residual": float(self.kkt_residual),
            "iterations": int(self.iterations),
            "objective": float(self.objective),
            "infeasibility": float(self.infeasibility),
        }


def _constraints(rp: RelaxedProblem, v):
    p = rp.mpec
    G, H = eval_G(p, v), eval_H(p, v)
    return G, H, np.concatenate([G, H, rp.t - G * H, [rp.C_max - v[0]]])


def constraint_values(rp: RelaxedProblem, v) -> np.ndarray:
    """``c(v) = [G; H; t - G*H; C_max - C]``; feasible iff all components are >= 0."""
    v = v.v if isinstance(v, MpecPoint) else np.asarray(v, dtype=float)
    return _constraints(rp, v)[2]


def _jacobian(p: MpecProblem, G, H) -> sp.csr_matrix:
    J3 = -(sp.diags(H) @ p.P + sp.diags(G) @ p.Q)
    cap = sp.csr_matrix(([-1.0], ([0], [0])), shape=(1, p.size))
    return sp.vstack([p.P, p.Q, J3, cap], format="csr")


def _dual_scale(lam) -> float:
    return max(100.0, np.sum(np.abs(lam)) / max(len(lam), 1)) / 100.0


def kkt_residual_nlp(rp: RelaxedProblem, point, multipliers, scaled: bool = True) -> float:
    """Sup-norm KKT residual of the relaxed NLP at ``(v, lambda)``.

    Largest of the Lagrangian gradient ``|M - J^T lambda|``, the complementarity
    ``|lambda_i * c_i|``, the constraint violation ``max(0, -c)`` and the
    negative part of ``lambda``, all in sup-norm. With ``scaled`` the first two terms are
    divided by ``max(1, mean|lambda| / 100)`` so that large multipliers near
    degenerate points do not dominate.
    """
    p = rp.mpec
    v = point.v if isinstance(point, MpecPoint) else np.asarray(point, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    G, H, c = _constraints(rp, v)
    J = _jacobian(p, G, H)
    sd = _dual_scale(lam) if scaled else 1.0
    grad = np.max(np.abs(p.M - J.T @ lam)) / sd
    comp = np.max(np.abs(lam * c)) / sd
    infeas = np.max(np.maximum(-c, 0.0))
    neg = np.max(np.maximum(-lam, 0.0))
    return float(max(grad, comp, infeas, neg))


class _Trace:
    def __init__(self, target):
        self.fh = None
        self.own = False
        if target is None:
            return
        if hasattr(target, "write"):
            self.fh = target
        else:
            self.fh = open(target, "a", encoding="utf-8")
            self.own = True

    def write(self, **rec):
        if self.fh is not None:
            self.fh.write(json.dumps(rec) + "\n")

    def close(self):
        if self.own:
            self.fh.close()


def _factor(K, delta0):
    """Cholesky of ``K + delta*I``, increasing delta until it succeeds."""
    n = K.shape[0]
    delta = 0.0
    for _ in range(60):
        try:
            L = sla.cho_factor(K + delta * np.eye(n) if delta else K, lower=True, check_finite=False)
            if np.all(np.isfinite(L[0])):
                return L, delta
        except (np.linalg.LinAlgError, sla.LinAlgError):
            pass
        delta = max(delta0, 1e-8) if delta == 0.0 else delta * 10.0
        if delta > 1e20:
            break
    return None, delta


def solve_relaxed(
    rp: RelaxedProblem,
    warm_start: MpecPoint | np.ndarray | SolverResult,
    opts: SolverOptions | None = None,
) -> SolverResult:
    """Approximate KKT point of the relaxed NLP, starting from ``warm_start``.

    Elastic barrier formulation: each constraint becomes ``c_i(v) + e_i >= 0``
    with ``e_i >= 0`` and a penalty ``rho * sum(e)``. Any warm start is then
    strictly feasible after choosing ``e``, and the linearized system is always
    consistent. ``rho`` is raised if the elastic variables do not vanish.

    A previous :class:`SolverResult` for the same ``t`` restarts from its full
    primal-dual state, so an already converged result is returned unchanged.
    """
    opts = opts or SolverOptions()
    p, t = rp.mpec, rp.t
    state = None
    if isinstance(warm_start, SolverResult):
        if warm_start.state is not None and warm_start.state["t"] == t:
            state = warm_start.state
        warm_start = warm_start.point
    v = (warm_start.v if isinstance(warm_start, MpecPoint) else np.asarray(warm_start, dtype=float)).copy()
    if v.shape != (p.size,):
        raise ValueError(f"warm start has length {v.shape}, expected {p.size}")
    mb = p.mbar
    M = p.M
    PT, QT = p.P.T.tocsr(), p.Q.T.tocsr()
    mu_min = min(opts.stat_tol, opts.feas_tol) / 10.0

    G, H, c = _constraints(rp, v)
    if state is not None:
        mu, rho = state["mu"], state["rho"]
        e, lam, eta = state["e"].copy(), state["lam"].copy(), state["eta"].copy()
        g = c + e
    else:
        if opts.lift and np.min(c) <= 0 and p.folds is not None:
            v = interior_point(p, v[0], t).v
            G, H, c = _constraints(rp, v)
        mu = opts.mu0 if opts.mu0 is not None else min(0.1, t)
        rho = opts.elastic_penalty
        e = np.maximum(-c, 0.0) + mu
        g = c + e
        lam = np.minimum(mu / g, 0.5 * rho)
        eta = np.maximum(rho - lam, mu / e)
    delta_last = 0.0
    trace = _Trace(opts.trace)
    status = "iteration_limit"
    it = 0
    step = 0.0
    best = None

    def measures(J, lam, eta, g, e, mu):
        sd = _dual_scale(lam)
        dual = max(np.max(np.abs(M - J.T @ lam)), np.max(np.abs(rho - lam - eta))) / sd
        comp = max(np.max(np.abs(g * lam - mu)), np.max(np.abs(e * eta - mu))) / sd
        return dual, comp

    try:
        while True:
            J = _jacobian(p, G, H)
            dual, comp = measures(J, lam, eta, g, e, mu)
            dual0, comp0 = measures(J, lam, eta, g, e, 0.0)
            infeas = float(np.max(np.maximum(-c, 0.0)))
            err0 = max(dual0, comp0, infeas)
            if best is None or err0 < best[0]:
                best = (err0, v.copy(), lam.copy(), infeas, {"e": e.copy(), "eta": eta.copy(), "mu": mu, "rho": rho})
            trace.write(iteration=it, objective=float(M @ v), mu=mu, dual=dual0, compl=comp0,
                        infeasibility=infeas, elastic=float(np.max(e)), step=step, delta=delta_last, rho=rho)
            if (
                dual0 <= opts.stat_tol
                and comp0 <= opts.stat_tol
                and infeas <= opts.feas_tol
                and kkt_residual_nlp(rp, v, lam) <= opts.stat_tol
            ):
                status = "converged"
                break
            if it >= opts.max_iters:
                break
            # barrier subproblem solved well enough -> shrink mu
            while mu > mu_min and max(dual, comp) <= opts.barrier_kappa * mu:
                mu = max(mu_min, min(opts.mu_decrease * mu, mu ** opts.mu_power))
                dual, comp = measures(J, lam, eta, g, e, mu)
            # elastic variables stuck away from zero while lambda presses on rho
            if mu <= 10 * mu_min and infeas > opts.feas_tol and np.max(lam) > 0.5 * rho:
                rho *= 10.0
                eta = eta + 9.0 * rho / 10.0

            # Newton step, with de, dlam, deta eliminated
            lam3 = lam[2 * mb : 3 * mb]
            D3 = sp.diags(lam3)
            W = PT @ D3 @ p.Q + QT @ D3 @ p.P
            Sg, Se = lam / g, eta / e
            D = Sg + Se
            Sig = Sg * Se / D
            b = rho - mu / g - mu / e
            K = (W + J.T @ sp.diags(Sig) @ J).toarray()
            rhs = -M + J.T @ (mu / g + Sg * b / D)
            L, delta = _factor(K, max(delta_last / 3.0, 1e-8) if delta_last else 1e-8)
            if L is None:
                status = "numerical_failure"
                break
            delta_last = delta
            dv = sla.cho_solve(L, rhs, check_finite=False)
            Jdv = J @ dv
            de = -(b + Sg * Jdv) / D
            dlam = mu / g - lam - Sg * (Jdv + de)
            deta = mu / e - eta - Se * de

            tau = max(opts.tau_min, 1.0 - mu)
            a_max = min(_max_step(e, de, tau), _max_step(g, Jdv + de, tau))
            a_d = min(_max_step(lam, dlam, tau), _max_step(eta, deta, tau))

            def barrier(v_, e_, g_):
                return M @ v_ + rho * np.sum(e_) - mu * (np.sum(np.log(g_)) + np.sum(np.log(e_)))

            phi0 = barrier(v, e, g)
            dphi = M @ dv + rho * np.sum(de) - mu * (np.sum((Jdv + de) / g) + np.sum(de / e))
            a = a_max
            accepted = False
            for _ in range(opts.max_backtracks):
                v_new, e_new = v + a * dv, e + a * de
                G_new, H_new, c_new = _constraints(rp, v_new)
                g_new = c_new + e_new
                if np.all(g_new >= (1.0 - tau) * g) and barrier(v_new, e_new, g_new) <= phi0 + opts.armijo * a * min(dphi, 0.0):
                    accepted = True
                    break
                a *= 0.5
            if not accepted:
                # tiny step that keeps strict feasibility
                a = 0.0
                v_new, e_new, G_new, H_new, c_new, g_new = v, e, G, H, c, g
            v, e, G, H, c, g = v_new, e_new, G_new, H_new, c_new, g_new
            a_dual = max(a, min(a_d, 1e-2)) if not accepted else min(a_d, max(a, 1e-2))
            lam = lam + a_dual * dlam
            eta = eta + a_dual * deta
            # keep duals consistent with the barrier
            kap = 1e10
            lam = np.clip(lam, mu / (kap * g), kap * mu / g)
            eta = np.clip(eta, mu / (kap * e), kap * mu / e)
            step = a
            it += 1
            if not np.all(np.isfinite(v)):
                status = "numerical_failure"
                break
    finally:
        trace.close()

    if status != "converged" and best is not None:
        v_out, lam_out, infeas, extra = best[1], best[2], best[3], best[4]
    else:
        v_out, lam_out = v, lam
        infeas = float(np.max(np.maximum(-c, 0.0)))
        extra = {"e": e.copy(), "eta": eta.copy(), "mu": mu, "rho": rho}
    kkt = kkt_residual_nlp(rp, v_out, lam_out)
    if status != "converged":
        log.warning("relaxed solve at t=%g ended with %s after %d iterations (kkt=%.3g)", t, status, it, kkt)
    return SolverResult(
        point=MpecPoint(v_out, p),
        status=status,
        kkt_residual=kkt,
        iterations=it,
        objective=float(M @ v_out),
        multipliers=lam_out,
        infeasibility=infeas,
        mu=extra["mu"],
        state={"t": t, "lam": lam_out.copy(), **extra},
    )


def _max_step(x, dx, tau):
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * x[neg] / dx[neg])))
