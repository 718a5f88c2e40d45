"""Lower-level l1-loss linear SVC without bias.

    min_w  0.5 ||w||^2 + C * sum(xi)   s.t.  B w >= 1 - xi,  xi >= 0

``B`` holds rows ``y_i x_i^T``. Training runs dual coordinate ascent on the
box-constrained dual ``min 0.5 a^T (B B^T) a - 1^T a, 0 <= a <= C`` and then
polishes the free block with a direct solve so bound values come out exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "SvcOptions",
    "SvcSolution",
    "LambdaPartition",
    "train_l1_svc",
    "primal_objective",
    "dual_objective",
    "lower_kkt_residual",
    "classify_training_points",
    "predict",
    "misclassification_count",
]


@dataclass
class SvcOptions:
    tol: float = 1e-8
    cd_epochs: int = 2000
    polish: bool = True
    seed: int = 0


@dataclass
class SvcSolution:
    w: np.ndarray
    xi: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    C: float
    status: str = "converged"
    iterations: int = 0

    def to_dict(self):
        return {
            "w": self.w.tolist(),
            "xi": self.xi.tolist(),
            "alpha": self.alpha.tolist(),
            "mu": self.mu.tolist(),
            "C": self.C,
            "status": self.status,
            "iterations": self.iterations,
        }


def _finish(B, alpha, C, status, iterations):
    w = B.T @ alpha
    xi = np.maximum(0.0, 1.0 - B @ w)
    return SvcSolution(w, xi, alpha, C - alpha, float(C), status, iterations)


def _min_norm_dual(B, sol: "SvcSolution"):
    """Replace the on-margin duals by the minimum-norm choice that keeps ``w``.

    The dual is not unique when margin rows are linearly dependent; picking the
    minimum-norm member makes the result independent of the iteration order.
    """
    r = B @ sol.w - 1.0
    on = np.abs(r) <= 1e-9 * max(1.0, float(np.max(np.abs(r))))
    if not on.any():
        return sol
    a = sol.alpha.copy()
    target = sol.w - B[~on].T @ a[~on]
    cand = np.linalg.lstsq(B[on].T, target, rcond=None)[0]
    tiny = 1e-12 * max(1.0, sol.C)
    if np.all(cand >= -tiny) and np.all(cand <= sol.C + tiny):
        a[on] = np.clip(cand, 0.0, sol.C)
        alt = _finish(B, a, sol.C, sol.status, sol.iterations)
        if lower_kkt_residual(alt, B) <= max(lower_kkt_residual(sol, B), 1e-12):
            return alt
    return sol


def _projected_gradient(grad, alpha, C):
    pg = grad.copy()
    pg[(alpha <= 0) & (grad > 0)] = 0.0
    pg[(alpha >= C) & (grad < 0)] = 0.0
    return pg


@numba.njit(cache=True)
def _cd_epochs(B, qdiag, alpha, w, C, order, n_epochs):
    m, n = B.shape
    for _ in range(n_epochs):
        for k in range(m):
            i = order[k]
            if qdiag[i] <= 0.0:
                # zero row: dual objective is -alpha_i there
                new = C
            else:
                g = -1.0
                for j in range(n):
                    g += B[i, j] * w[j]
                new = alpha[i] - g / qdiag[i]
                if new < 0.0:
                    new = 0.0
                elif new > C:
                    new = C
            d = new - alpha[i]
            if d != 0.0:
                for j in range(n):
                    w[j] += d * B[i, j]
                alpha[i] = new


def _polish(Q, alpha, C, max_rounds=50):
    """Primal active-set finish on the dual box QP, started from ``alpha``.

    The free block is solved by minimum-norm least squares (falling back to
    the smallest correction of the current iterate), so a singular ``B B^T``
    is fine. Bound variables with the wrong gradient sign are released one at
    a time. Returns None if no KKT point is reached within ``max_rounds``.
    """
    a = np.clip(alpha, 0.0, C)
    tiny = 1e-12 * max(C, 1.0)
    gtol = 1e-11 * max(C, 1.0) * max(1.0, float(np.max(np.abs(np.diag(Q)))))
    lower = a <= tiny
    upper = ~lower & (a >= C - tiny)
    for _ in range(max_rounds):
        free = ~(lower | upper)
        a[lower] = 0.0
        a[upper] = C
        if free.any():
            QFF = Q[np.ix_(free, free)]
            rhs = 1.0 - Q[np.ix_(free, ~free)] @ a[~free]
            sol = np.linalg.lstsq(QFF, rhs, rcond=None)[0]
            if not np.all((sol >= -tiny) & (sol <= C + tiny)):
                sol = a[free] + np.linalg.lstsq(QFF, rhs - QFF @ a[free], rcond=None)[0]
            if not np.all((sol >= -tiny) & (sol <= C + tiny)):
                # move toward the free-block solution until something hits a bound
                cur = a[free]
                d = sol - cur
                with np.errstate(divide="ignore", invalid="ignore"):
                    cap = np.where(d < 0, -cur / d, np.where(d > 0, (C - cur) / d, np.inf))
                step = float(np.clip(np.min(cap), 0.0, 1.0))
                new = np.clip(cur + step * d, 0.0, C)
                idx = np.flatnonzero(free)
                hit = cap <= step + 1e-12
                lower[idx[hit & (d < 0)]] = True
                upper[idx[hit & (d > 0)]] = True
                a[idx] = new
                continue
            a[free] = np.clip(sol, 0.0, C)
        g = Q @ a - 1.0
        viol = np.where(lower, np.maximum(-g, 0.0), 0.0) + np.where(upper, np.maximum(g, 0.0), 0.0)
        worst = int(np.argmax(viol))
        if viol[worst] <= gtol:
            return a
        lower[worst] = upper[worst] = False
    return None


def _primal_dual_ipm(B, C, tol=1e-10, max_iter=100):
    """Mehrotra-free path-following IPM on the primal QP; returns (w, xi, alpha)."""
    m, n = B.shape
    w = np.zeros(n)
    xi = np.ones(m)
    s = np.ones(m)
    alpha = np.full(m, 0.5 * C)
    mu = np.full(m, 0.5 * C)
    scale = max(1.0, C)
    for _ in range(max_iter):
        r_w = w - B.T @ alpha
        r_xi = C - alpha - mu
        r_s = B @ w + xi - 1.0 - s
        gap = (alpha @ s + mu @ xi) / (2 * m)
        if max(np.max(np.abs(r_w)), np.max(np.abs(r_xi)), np.max(np.abs(r_s))) <= tol * scale and gap <= tol * scale:
            break
        tau = 0.1 * gap
        r_as = alpha * s - tau
        r_mx = mu * xi - tau
        D1, D2 = alpha / s, mu / xi
        D = D1 * D2 / (D1 + D2)
        u = (r_as + alpha * r_s) / s
        h = -r_xi - u - r_mx / xi
        rhs = -r_w - B.T @ u - B.T @ (D1 * h / (D1 + D2))
        if m < n:
            # Woodbury keeps the solve m x m when features outnumber points
            K = np.diag(1.0 / D) + B @ B.T
            dw = rhs - B.T @ np.linalg.solve(K, B @ rhs)
        else:
            K = np.eye(n) + (B.T * D) @ B
            dw = np.linalg.solve(K, rhs)
        dxi = (h - D1 * (B @ dw)) / (D1 + D2)
        ds = B @ dw + dxi + r_s
        dalpha = -(r_as + alpha * ds) / s
        dmu = -(r_mx + mu * dxi) / xi

        def _cap(x, dx):
            neg = dx < 0
            return min(1.0, 0.995 * float(np.min(-x[neg] / dx[neg]))) if neg.any() else 1.0

        ap = min(_cap(s, ds), _cap(xi, dxi))
        ad = min(_cap(alpha, dalpha), _cap(mu, dmu))
        w += ap * dw
        xi += ap * dxi
        s += ap * ds
        alpha += ad * dalpha
        mu += ad * dmu
    return w, xi, alpha


def _crossover(B, Q, w, alpha, C, band=1e-6):
    """Snap an interior solution onto exact bounds using its primal margins."""
    r = B @ w - 1.0
    a = alpha.copy()
    width = band * max(1.0, np.max(np.abs(r)))
    a[r > width] = 0.0
    a[r < -width] = C
    return _polish(Q, a, C, max_rounds=5 * len(a))


def train_l1_svc(B, C: float, opts: SvcOptions | None = None) -> SvcSolution:
    """Train the l1-loss SVC on rows ``B`` at regularization ``C``.

    Dual coordinate ascent runs first; if it has not met ``opts.tol`` within
    ``opts.cd_epochs`` epochs a primal-dual interior point solve with an exact
    active-set crossover finishes the job. ``status`` is ``"iteration_limit"``
    when neither reaches the tolerance.
    """
    opts = opts or SvcOptions()
    B = np.ascontiguousarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] == 0:
        raise ValueError("B must be a nonempty 2-D array")
    if C < 0:
        raise ValueError("C must be nonnegative")
    m = B.shape[0]
    if C == 0:
        return _finish(B, np.zeros(m), 0.0, "converged", 0)

    Q = B @ B.T
    qdiag = np.diag(Q).copy()
    alpha = np.zeros(m)
    w = np.zeros(B.shape[1])
    rng = np.random.default_rng(opts.seed)

    epoch, chunk = 0, 10
    best = None

    def consider(a):
        nonlocal best
        sol = _finish(B, a, C, "converged", epoch)
        res = lower_kkt_residual(sol, B)
        if res <= opts.tol:
            sol = _min_norm_dual(B, sol)
        if best is None or res < best[0]:
            best = (res, sol)
        return res <= opts.tol

    while epoch < opts.cd_epochs:
        _cd_epochs(B, qdiag, alpha, w, float(C), rng.permutation(m), chunk)
        epoch += chunk
        if opts.polish:
            cand = _polish(Q, alpha, C, max_rounds=10)
            if cand is not None and consider(cand):
                return best[1]
        if consider(alpha.copy()):
            return best[1]
        chunk = min(2 * chunk, 200)

    w_ipm, _, a_ipm = _primal_dual_ipm(B, C)
    cand = _crossover(B, Q, w_ipm, np.clip(a_ipm, 0.0, C), C)
    if cand is not None and consider(cand):
        return best[1]
    consider(np.clip(a_ipm, 0.0, C))

    res, sol = best
    if res > opts.tol:
        sol.status = "iteration_limit"
        log.warning("train_l1_svc: KKT residual %.2e above tol (C=%g)", res, C)
    return sol


def primal_objective(B, C, w, xi=None) -> float:
    if xi is None:
        xi = np.maximum(0.0, 1.0 - B @ w)
    return 0.5 * float(w @ w) + C * float(np.sum(xi))


def dual_objective(B, alpha) -> float:
    """Value of the Lagrangian dual, ``1^T a - 0.5 ||B^T a||^2``."""
    w = B.T @ alpha
    return float(np.sum(alpha)) - 0.5 * float(w @ w)


def lower_kkt_residual(sol: SvcSolution, B) -> float:
    """Sup-norm residual of the reduced KKT system.

    Uses componentwise ``min`` for both complementarity pairs plus any sign
    violations of ``alpha``, ``xi`` and ``C - alpha``.
    """
    B = np.asarray(B, dtype=float)
    a, xi, C = sol.alpha, sol.xi, sol.C
    g3 = B @ (B.T @ a) - 1.0 + xi
    g4 = C - a
    parts = [
        np.abs(np.minimum(a, g3)),
        np.abs(np.minimum(xi, g4)),
        np.maximum(0.0, -a),
        np.maximum(0.0, -xi),
        np.maximum(0.0, -g3),
        np.maximum(0.0, -g4),
        np.abs(sol.w - B.T @ a),
        np.abs(C - a - sol.mu),
    ]
    return float(max(np.max(p, initial=0.0) for p in parts))


@dataclass
class LambdaPartition:
    L1: list
    L2: list
    L3: list
    L4: list
    L5: list
    L6: list
    L3_plus: list
    L3_c: list
    eps: float
    ambiguous: list = field(default_factory=list)

    @property
    def Lu(self):
        return sorted(self.L4 + self.L5 + self.L6)

    def sets(self):
        return {"L1": self.L1, "L2": self.L2, "L3": self.L3, "L4": self.L4, "L5": self.L5, "L6": self.L6}

    def sizes(self):
        out = {k: len(v) for k, v in self.sets().items()}
        out.update(L3_plus=len(self.L3_plus), L3_c=len(self.L3_c), ambiguous=len(self.ambiguous))
        return out


def classify_training_points(sol: SvcSolution, B, eps: float = 1e-6, offset: int = 0) -> LambdaPartition:
    """Assign each training index to one of the six margin/support patterns.

    Values within ``eps`` of zero (or of ``C``, or of 1 for the slack) count as
    equal. Indices that fit no pattern are recorded in ``ambiguous`` and placed
    in the closest pattern.
    """
    return classify_lambda(sol.alpha, sol.xi, B @ (B.T @ sol.alpha) - 1.0 + sol.xi, sol.C, eps, offset)


def classify_lambda(alpha, xi, g3, C, eps=1e-6, offset=0) -> LambdaPartition:
    sets = {k: [] for k in ("L1", "L2", "L3", "L4", "L5", "L6", "L3_plus", "L3_c")}
    ambiguous = []
    for i, (a, x, g) in enumerate(zip(alpha, xi, g3)):
        idx = i + offset
        a0, aC = abs(a) <= eps, abs(C - a) <= eps
        g0, x0 = abs(g) <= eps, abs(x) <= eps
        key = None
        if a0 and x0:
            key = "L1" if g0 else ("L2" if g > eps else None)
        elif a > eps and g0 and x0:
            key = "L3"
        elif aC and g0 and x > eps:
            key = "L4" if x < 1 - eps else ("L5" if x <= 1 + eps else "L6")
        if key is None:
            ambiguous.append(idx)
            key = _nearest_lambda(a, x, g, C)
        sets[key].append(idx)
        if key == "L3":
            sets["L3_c" if aC else "L3_plus"].append(idx)
    return LambdaPartition(**{k: v for k, v in sets.items()}, eps=eps, ambiguous=ambiguous)


def _nearest_lambda(a, x, g, C):
    pos = lambda u: max(u, 0.0)  # noqa: E731
    cands = {
        "L1": abs(a) + abs(g) + abs(x),
        "L2": abs(a) + pos(-g) + abs(x),
        "L3": pos(-a) + pos(a - C) + abs(g) + abs(x),
        "L4": abs(C - a) + abs(g) + pos(-x) + pos(x - 1),
        "L5": abs(C - a) + abs(g) + abs(x - 1),
        "L6": abs(C - a) + abs(g) + pos(1 - x),
    }
    return min(cands, key=cands.get)


def predict(w, X) -> np.ndarray:
    """Labels ``sign(X w)`` with ties broken to +1; works for one sample or many."""
    s = np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)
    return np.where(s >= 0, 1, -1)


def misclassification_count(w, X, y) -> int:
    return int(np.sum(predict(w, X) != np.asarray(y)))
