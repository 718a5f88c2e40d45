"""The cross-validation MPEC in compact form and its diagnostics.

Decision vector ``v = [C, zeta, z, alpha, xi]`` with ``zeta, z`` of length
``T*m1`` and ``alpha, xi`` of length ``T*m2``. The problem is

    min  F(v) = M^T v      s.t.   0 <= H(v) _|_ G(v) >= 0

where ``H(v) = v[1:]`` and ``G(v) = P v + a`` stacks four parts:

    part 1:  A B^T alpha + z          (pairs with zeta)
    part 2:  1 - zeta                 (pairs with z)
    part 3:  B B^T alpha - 1 + xi     (pairs with alpha)
    part 4:  C - alpha                (pairs with xi)

``A`` and ``B`` are block diagonal over folds; only the per-fold Gram blocks
are stored and ``P`` is assembled as a sparse matrix on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .dataset import FoldMatrices
from .svc_lower import LambdaPartition, SvcOptions, classify_lambda, train_l1_svc

__all__ = [
    "MpecProblem",
    "MpecPoint",
    "PsiPartition",
    "ActiveSets",
    "MfcqResult",
    "assemble_mpec",
    "eval_F",
    "eval_G",
    "eval_H",
    "vio",
    "vio_components",
    "zeta_loss_lp",
    "classify_validation_points",
    "classify_training_sets",
    "active_sets",
    "check_index_relations",
    "positive_linear_dependence",
    "mfcq_diagnostic",
    "active_gradient_matrix",
    "c_stationarity_residual",
    "feasible_point",
    "interior_point",
    "fold_weights",
    "validation_margins",
    "diagnostic_report",
]


@dataclass(frozen=True)
class MpecProblem:
    T: int
    m1: int
    m2: int
    n: int
    gram_AB: tuple[np.ndarray, ...]
    gram_BB: tuple[np.ndarray, ...]
    folds: FoldMatrices | None = field(default=None, compare=False, repr=False)

    @property
    def mbar(self) -> int:
        return 2 * self.T * (self.m1 + self.m2)

    @property
    def size(self) -> int:
        return self.mbar + 1

    @property
    def nu(self) -> int:
        return self.T * self.m1

    @property
    def nl(self) -> int:
        return self.T * self.m2

    # slices of v
    @property
    def s_C(self):
        return slice(0, 1)

    @property
    def s_zeta(self):
        return slice(1, 1 + self.nu)

    @property
    def s_z(self):
        return slice(1 + self.nu, 1 + 2 * self.nu)

    @property
    def s_alpha(self):
        return slice(1 + 2 * self.nu, 1 + 2 * self.nu + self.nl)

    @property
    def s_xi(self):
        return slice(1 + 2 * self.nu + self.nl, self.size)

    # slices of G / H
    def part(self, k: int) -> slice:
        nu, nl = self.nu, self.nl
        bounds = [0, nu, 2 * nu, 2 * nu + nl, 2 * nu + 2 * nl]
        return slice(bounds[k - 1], bounds[k])

    @cached_property
    def M(self) -> np.ndarray:
        M = np.zeros(self.size)
        M[self.s_zeta] = 1.0 / (self.T * self.m1)
        return M

    @cached_property
    def a(self) -> np.ndarray:
        a = np.zeros(self.mbar)
        a[self.part(2)] = 1.0
        a[self.part(3)] = -1.0
        return a

    @cached_property
    def AB(self) -> sp.csr_matrix:
        return sp.block_diag(self.gram_AB, format="csr")

    @cached_property
    def BB(self) -> sp.csr_matrix:
        return sp.block_diag(self.gram_BB, format="csr")

    @cached_property
    def P(self) -> sp.csr_matrix:
        nu, nl = self.nu, self.nl
        Iu, Il = sp.identity(nu, format="csr"), sp.identity(nl, format="csr")
        ones = sp.csr_matrix(np.ones((nl, 1)))
        return sp.bmat(
            [
                [None, sp.csr_matrix((nu, nu)), Iu, self.AB, sp.csr_matrix((nu, nl))],
                [sp.csr_matrix((nu, 1)), -Iu, None, None, None],
                [None, None, sp.csr_matrix((nl, nu)), self.BB, Il],
                [ones, None, None, -Il, None],
            ],
            format="csr",
        )

    @cached_property
    def Q(self) -> sp.csr_matrix:
        return sp.hstack([sp.csr_matrix((self.mbar, 1)), sp.identity(self.mbar)], format="csr")

    def point(self, v) -> "MpecPoint":
        return MpecPoint(np.asarray(v, dtype=float), self)

    def initial_point(self, C: float = 1.0) -> "MpecPoint":
        """``[C, 0, ..., 0]``, the default GRM start."""
        v = np.zeros(self.size)
        v[0] = C
        return MpecPoint(v, self)


@dataclass
class MpecPoint:
    v: np.ndarray
    problem: MpecProblem = field(repr=False)

    def __post_init__(self):
        if self.v.shape != (self.problem.size,):
            raise ValueError(f"expected vector of length {self.problem.size}, got {self.v.shape}")

    @property
    def C(self) -> float:
        return float(self.v[0])

    @property
    def zeta(self):
        return self.v[self.problem.s_zeta]

    @property
    def z(self):
        return self.v[self.problem.s_z]

    @property
    def alpha(self):
        return self.v[self.problem.s_alpha]

    @property
    def xi(self):
        return self.v[self.problem.s_xi]

    def parts(self):
        return self.C, self.zeta.copy(), self.z.copy(), self.alpha.copy(), self.xi.copy()

    @classmethod
    def from_parts(cls, problem: MpecProblem, C, zeta, z, alpha, xi) -> "MpecPoint":
        v = np.concatenate([[float(C)], zeta, z, alpha, xi]).astype(float)
        return cls(v, problem)

    def copy(self) -> "MpecPoint":
        return MpecPoint(self.v.copy(), self.problem)


def assemble_mpec(fm: FoldMatrices, dims: dict | None = None) -> MpecProblem:
    """Build the compact MPEC from fold matrices.

    ``dims`` (optional) is checked against the matrix shapes, e.g.
    ``{"T": 3, "m1": 63, "m2": 126, "n": 13}``.
    """
    T = len(fm.A)
    if T != len(fm.B) or T < 1:
        raise ValueError("A and B must have the same nonzero number of folds")
    m1, n = fm.A[0].shape
    m2 = fm.B[0].shape[0]
    for t in range(T):
        if fm.A[t].shape != (m1, n) or fm.B[t].shape != (m2, n):
            raise ValueError(f"fold {t}: shapes {fm.A[t].shape}, {fm.B[t].shape} do not match ({m1},{n}), ({m2},{n})")
    if dims:
        got = {"T": T, "m1": m1, "m2": m2, "n": n}
        for key, val in dims.items():
            if key in got and got[key] != val:
                raise ValueError(f"dimension mismatch for {key}: expected {val}, got {got[key]}")
    AB = tuple(fm.A[t] @ fm.B[t].T for t in range(T))
    BB = tuple(fm.B[t] @ fm.B[t].T for t in range(T))
    return MpecProblem(T, m1, m2, n, AB, BB, fm)


def _vec(v):
    return v.v if isinstance(v, MpecPoint) else np.asarray(v, dtype=float)


def _blockmul(blocks, x, rows):
    out = np.empty(len(blocks) * rows)
    cols = blocks[0].shape[1]
    for t, blk in enumerate(blocks):
        out[t * rows : (t + 1) * rows] = blk @ x[t * cols : (t + 1) * cols]
    return out


def eval_F(p: MpecProblem, v) -> float:
    v = _vec(v)
    return float(np.sum(v[p.s_zeta])) / (p.T * p.m1)


def eval_G(p: MpecProblem, v) -> np.ndarray:
    v = _vec(v)
    C, zeta, z, alpha, xi = v[0], v[p.s_zeta], v[p.s_z], v[p.s_alpha], v[p.s_xi]
    return np.concatenate(
        [
            _blockmul(p.gram_AB, alpha, p.m1) + z,
            1.0 - zeta,
            _blockmul(p.gram_BB, alpha, p.m2) - 1.0 + xi,
            C - alpha,
        ]
    )


def eval_H(p: MpecProblem, v) -> np.ndarray:
    return _vec(v)[1:].copy()


def vio(p: MpecProblem, v) -> float:
    """``|| min(G(v), H(v)) ||_inf``."""
    return float(np.max(np.abs(np.minimum(eval_G(p, v), eval_H(p, v)))))


def vio_components(p: MpecProblem, v) -> dict:
    """Split Vio into sign infeasibility and leftover complementarity."""
    m = np.minimum(eval_G(p, v), eval_H(p, v))
    return {
        "vio": float(np.max(np.abs(m))),
        "infeasibility": float(np.max(np.maximum(-m, 0.0))),
        "complementarity": float(np.max(np.maximum(m, 0.0))),
    }


def zeta_loss_lp(r) -> np.ndarray:
    """Vertex solution of ``min -u^T r, 0 <= u <= 1``: 1 where ``r > 0``, else 0."""
    r = np.asarray(r, dtype=float)
    return (r > 0).astype(float)


def fold_weights(p: MpecProblem, v) -> list[np.ndarray]:
    """Per-fold classifiers ``w_t = B_t^T alpha_t`` (needs the fold matrices)."""
    if p.folds is None:
        raise ValueError("problem was assembled without fold matrices")
    alpha = _vec(v)[p.s_alpha]
    return [p.folds.B[t].T @ alpha[t * p.m2 : (t + 1) * p.m2] for t in range(p.T)]


def validation_margins(p: MpecProblem, v) -> np.ndarray:
    """``A B^T alpha`` stacked over folds, i.e. ``y_i w_t^T x_i`` on validation points."""
    return _blockmul(p.gram_AB, _vec(v)[p.s_alpha], p.m1)


# ----------------------------------------------------------------------------
# index-set classification


@dataclass
class PsiPartition:
    psi1_0: list
    psi1_plus: list
    psi2: list
    psi3: list
    eps: float
    ambiguous: list = field(default_factory=list)

    @property
    def psi1(self):
        return sorted(self.psi1_0 + self.psi1_plus)

    def sizes(self):
        return {
            "psi1_0": len(self.psi1_0),
            "psi1_plus": len(self.psi1_plus),
            "psi2": len(self.psi2),
            "psi3": len(self.psi3),
            "ambiguous": len(self.ambiguous),
        }


def classify_validation_points(p: MpecProblem, v, eps: float = 1e-6) -> PsiPartition:
    """Sort validation indices into on-hyperplane / correct / misclassified patterns."""
    v = _vec(v)
    zeta, z = v[p.s_zeta], v[p.s_z]
    g1 = eval_G(p, v)[p.part(1)]
    out = {"psi1_0": [], "psi1_plus": [], "psi2": [], "psi3": []}
    ambiguous = []
    for i in range(p.nu):
        zt, zi, g = zeta[i], z[i], g1[i]
        z0, g0 = abs(zi) <= eps, abs(g) <= eps
        key = None
        if z0 and g0 and abs(zt) <= eps:
            key = "psi1_0"
        elif z0 and g0 and eps < zt < 1 - eps:
            key = "psi1_plus"
        elif z0 and g > eps and abs(zt) <= eps:
            key = "psi2"
        elif zi > eps and g0 and abs(1 - zt) <= eps:
            key = "psi3"
        if key is None:
            ambiguous.append(i)
            cands = {
                "psi1_0": abs(zt) + abs(g) + abs(zi),
                "psi1_plus": abs(g) + abs(zi) + max(-zt, 0) + max(zt - 1, 0),
                "psi2": abs(zt) + max(-g, 0) + abs(zi),
                "psi3": abs(1 - zt) + abs(g) + max(-zi, 0),
            }
            key = min(cands, key=cands.get)
        out[key].append(i)
    return PsiPartition(**out, eps=eps, ambiguous=ambiguous)


def classify_training_sets(p: MpecProblem, v, eps: float = 1e-6) -> LambdaPartition:
    """Lambda patterns over all folds' training indices (global Q_l numbering)."""
    v = _vec(v)
    g3 = eval_G(p, v)[p.part(3)]
    return classify_lambda(v[p.s_alpha], v[p.s_xi], g3, float(v[0]), eps)


@dataclass
class ActiveSets:
    IH: dict
    IG: dict
    IGH: dict
    eps: float
    unclassified: dict = field(default_factory=dict)

    def union(self, which: str) -> np.ndarray:
        """Global (0..mbar-1) indices of I_H, I_G or I_GH across the four parts."""
        raise NotImplementedError  # replaced at construction time

    def sizes(self):
        return {
            f"{name}{k}": len(getattr(self, name)[k])
            for name in ("IH", "IG", "IGH")
            for k in (1, 2, 3, 4)
        }


def _split_pairs(h, g, eps):
    h0, g0 = np.abs(h) <= eps, np.abs(g) <= eps
    IH = np.flatnonzero(h0 & (g > eps))
    IG = np.flatnonzero(g0 & (h > eps))
    IGH = np.flatnonzero(h0 & g0)
    bad = np.flatnonzero(~((h0 & (g > eps)) | (g0 & (h > eps)) | (h0 & g0)))
    return IH, IG, IGH, bad


def active_sets(p: MpecProblem, v, eps: float = 1e-6) -> ActiveSets:
    """Per-part split of complementarity indices into H-active, G-active and biactive."""
    v = _vec(v)
    G, H = eval_G(p, v), eval_H(p, v)
    IH, IG, IGH, bad = {}, {}, {}, {}
    for k in (1, 2, 3, 4):
        sl = p.part(k)
        IH[k], IG[k], IGH[k], bad[k] = (x.tolist() for x in _split_pairs(H[sl], G[sl], eps))
    sets = ActiveSets(IH, IG, IGH, eps, {k: b for k, b in bad.items() if b})

    def union(which, _p=p, _s=sets):
        d = getattr(_s, which)
        return np.concatenate([np.asarray(d[k], dtype=int) + _p.part(k).start for k in (1, 2, 3, 4)])

    sets.union = union
    return sets


def check_index_relations(p: MpecProblem, v, eps: float = 1e-6) -> dict:
    """Compare the active sets with the margin-pattern sets they should equal.

    Returns ``{name: (ok, active_set, pattern_set)}`` for the twelve relations,
    e.g. ``"IGH2 = {}"`` or ``"IG4 = Lu"``.
    """
    acts = active_sets(p, v, eps)
    psi = classify_validation_points(p, v, eps)
    lam = classify_training_sets(p, v, eps)
    rel = {
        "IH1 = psi2": (acts.IH[1], psi.psi2),
        "IG1 = psi1+ u psi3": (acts.IG[1], psi.psi1_plus + psi.psi3),
        "IGH1 = psi1_0": (acts.IGH[1], psi.psi1_0),
        "IH2 = psi1 u psi2": (acts.IH[2], psi.psi1 + psi.psi2),
        "IG2 = psi3": (acts.IG[2], psi.psi3),
        "IGH2 = {}": (acts.IGH[2], []),
        "IH3 = L2": (acts.IH[3], lam.L2),
        "IG3 = L3 u Lu": (acts.IG[3], lam.L3 + lam.Lu),
        "IGH3 = L1": (acts.IGH[3], lam.L1),
        "IH4 = L1 u L2 u L3+": (acts.IH[4], lam.L1 + lam.L2 + lam.L3_plus),
        "IG4 = Lu": (acts.IG[4], lam.Lu),
        "IGH4 = L3c": (acts.IGH[4], lam.L3_c),
    }
    return {k: (set(a) == set(b), sorted(a), sorted(b)) for k, (a, b) in rel.items()}


# ----------------------------------------------------------------------------
# constraint qualification and stationarity


@dataclass
class MfcqResult:
    independent: bool
    certificate: np.ndarray | None = None
    n_rows: int = 0
    status: str = ""

    def __bool__(self):
        return self.independent


def positive_linear_dependence(Gamma) -> MfcqResult:
    """Decide whether the rows of ``Gamma`` are positive-linearly dependent.

    Solves the feasibility LP  ``delta >= 0, sum(delta) = 1, Gamma^T delta = 0``;
    infeasible means independent, otherwise ``delta`` is the certificate.
    """
    Gamma = sp.csr_matrix(Gamma)
    k = Gamma.shape[0]
    if k == 0:
        return MfcqResult(True, None, 0, "empty")
    A_eq = sp.vstack([Gamma.T, sp.csr_matrix(np.ones((1, k)))], format="csr")
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[-1] = 1.0
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        return MfcqResult(True, None, k, "infeasible")
    if res.status == 0:
        return MfcqResult(False, res.x, k, "feasible")
    raise RuntimeError(f"LP solver failed: {res.message}")


def _active_gradients(p: MpecProblem, acts: ActiveSets):
    g_rows = np.sort(np.concatenate([acts.union("IG"), acts.union("IGH")])).astype(int)
    h_rows = np.sort(np.concatenate([acts.union("IH"), acts.union("IGH")])).astype(int)
    return g_rows, h_rows


def active_gradient_matrix(p: MpecProblem, v, eps: float = 1e-6) -> sp.csr_matrix:
    """Rows: gradients of G_i on I_G u I_GH, then of H_i on I_H u I_GH."""
    acts = active_sets(p, v, eps)
    if acts.unclassified:
        raise ValueError(f"point is not complementary at eps={eps}: {acts.unclassified}")
    g_rows, h_rows = _active_gradients(p, acts)
    return sp.vstack([p.P[g_rows], p.Q[h_rows]], format="csr")


def mfcq_diagnostic(p: MpecProblem, v, eps: float = 1e-6) -> MfcqResult:
    """Test positive-linear independence of the MPEC-active gradients at ``v``."""
    return positive_linear_dependence(active_gradient_matrix(p, v, eps))


def c_stationarity_residual(p: MpecProblem, v, eps: float = 1e-6):
    """Least-squares C-stationarity check.

    Fits ``grad F = sum gamma_i grad G_i + sum nu_i grad H_i`` with ``gamma``
    zero on I_H and ``nu`` zero on I_G, then adds ``sum max(0, -gamma_i nu_i)``
    over biactive indices. Returns ``(residual, {"gamma": ..., "nu": ...})``.
    """
    acts = active_sets(p, v, eps)
    g_rows, h_rows = _active_gradients(p, acts)
    J = sp.vstack([p.P[g_rows], p.Q[h_rows]], format="csr").T.toarray()
    coef = np.linalg.lstsq(J, p.M, rcond=None)[0] if J.shape[1] else np.zeros(0)
    gamma = np.zeros(p.mbar)
    nu = np.zeros(p.mbar)
    gamma[g_rows] = coef[: len(g_rows)]
    nu[h_rows] = coef[len(g_rows) :]
    stat = float(np.linalg.norm(p.M - (J @ coef if J.shape[1] else 0.0)))
    bi = acts.union("IGH").astype(int)
    sign = float(np.sum(np.maximum(0.0, -gamma[bi] * nu[bi])))
    return stat + sign, {"gamma": gamma, "nu": nu, "stationarity": stat, "sign_violation": sign}


# ----------------------------------------------------------------------------
# feasible points


def feasible_point(p: MpecProblem, C: float, svc_opts: SvcOptions | None = None) -> MpecPoint:
    """Exact MPEC-feasible point for a given ``C``.

    Trains each fold's lower-level problem, sets ``zeta`` by the 0-1 LP rule
    and ``z = max(-A w, 0)``.
    """
    if p.folds is None:
        raise ValueError("problem was assembled without fold matrices")
    alpha, xi = [], []
    for t in range(p.T):
        sol = train_l1_svc(p.folds.B[t], C, svc_opts)
        alpha.append(sol.alpha)
        xi.append(sol.xi)
    alpha = np.concatenate(alpha)
    xi = np.concatenate(xi)
    r = -_blockmul(p.gram_AB, alpha, p.m1)
    zeta = zeta_loss_lp(r)
    z = np.maximum(r, 0.0)
    return MpecPoint.from_parts(p, C, zeta, z, alpha, xi)


def interior_point(p: MpecProblem, C: float, t: float, svc_opts: SvcOptions | None = None, base: MpecPoint | None = None) -> MpecPoint:
    """Point with ``G > 0``, ``H > 0`` and ``G_i H_i < t/2`` for every pair.

    Starts from the exact lower-level solution at ``C`` (or ``base`` if
    given), moves every ``alpha`` strictly inside ``(0, C)``, then sets
    ``xi``, ``zeta`` and ``z`` a small distance off their bounds. The offsets
    are halved until all products fall below ``t/2``; if rounding makes that
    impossible (very large ``C`` with tiny ``t``) the least violating
    candidate is returned.
    """
    C = float(C) if C > 0 else float(t)
    base = base if base is not None else feasible_point(p, C, svc_opts)
    alpha0 = base.alpha
    s = min(t, 1.0)  # offset scale; a loose cap must not push zeta outside [0, 1]
    ex = s / (4.0 * max(C, 1.0))
    ea = min(0.25 * C, s / (4.0 * (1.0 + np.max(base.xi, initial=0.0))))
    best = None
    for _ in range(200):
        alpha = np.clip(alpha0, ea, C - ea)
        r = _blockmul(p.gram_BB, alpha, p.m2)
        xi = np.maximum(1.0 - r, 0.0) + ex
        mrg = _blockmul(p.gram_AB, alpha, p.m1)
        ez = s / (4.0 * (1.0 + np.max(np.abs(mrg))))
        bad = mrg <= 0
        zeta = np.where(bad, 1.0 - ez, ez)
        z = np.where(bad, -mrg + ez, ez)
        pt = MpecPoint.from_parts(p, C, zeta, z, alpha, xi)
        G, H = eval_G(p, pt), eval_H(p, pt)
        worst = max(np.max(G * H) / t, -np.min(G), -np.min(H))
        if worst < 0.5 and np.min(G) > 0 and np.min(H) > 0:
            return pt
        if best is None or worst < best[0]:
            best = (worst, pt)
        # moving alpha off its bounds shifts the margins; shrink that move
        ea *= 0.5
    # rounding at very large C can make the target unreachable
    return best[1]


def diagnostic_report(p: MpecProblem, v, eps: float = 1e-6) -> dict:
    """JSON-ready summary: active-set sizes, Vio, stationarity, MFCQ verdict."""
    acts = active_sets(p, v, eps)
    res, _ = c_stationarity_residual(p, v, eps)
    out = {
        "F": eval_F(p, v),
        **vio_components(p, v),
        "active_set_sizes": acts.sizes(),
        "unclassified": {str(k): b for k, b in acts.unclassified.items()},
        "c_stationarity_residual": res,
    }
    if not acts.unclassified:
        out["mfcq_independent"] = mfcq_diagnostic(p, v, eps).independent
        out["index_relations"] = {k: ok for k, (ok, _, _) in check_index_relations(p, v, eps).items()}
    return json.loads(json.dumps(out))
