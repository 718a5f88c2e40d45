"""Toy data generators and brute-force oracles shared by the tests.

The oracles deliberately avoid the package's solvers: the lower-level QP is
solved by enumerating faces of the hinge arrangement, and the 0-1 LP by
enumerating the vertices of the unit box.
"""

from __future__ import annotations

import itertools

import numpy as np

from grcv.dataset import Dataset, Sample, parse_libsvm
from grcv.mpec import eval_F, feasible_point


def noisy_dataset(seed: int, m: int = 60, noise: float = 0.7) -> Dataset:
    """Two features; label is the sign of the first one plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, 2))
    y = np.sign(X[:, 0] + noise * rng.normal(size=m))
    y[y == 0] = 1
    return dataset_from(X, y)


def separable_dataset(seed: int, m: int = 30) -> Dataset:
    """Labels ``sign(x_1)`` with ``|x_1| >= 1`` and a small second feature."""
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    x1 = y * (1.0 + rng.uniform(0.0, 1.0, size=m))
    x2 = rng.uniform(-0.1, 0.1, size=m)
    return dataset_from(np.column_stack([x1, x2]), y)


def dataset_from(X, y) -> Dataset:
    samples = tuple(
        Sample({j + 1: float(v) for j, v in enumerate(row) if v != 0.0}, int(lab)) for row, lab in zip(X, y)
    )
    return Dataset(samples, X.shape[1])


def libsvm_text(X, y) -> str:
    return "".join(f"{int(l)} " + " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row)) + "\n" for l, row in zip(y, X))


def qp_oracle(B, C):
    """Exact minimum of ``0.5||w||^2 + C sum (1 - Bw)_+`` by face enumeration.

    For every split of the rows into a hinge-active set S and a small set E held
    at ``b_i^T w = 1``, the smooth piece is minimized on that affine set; the
    true objective is evaluated at each candidate and the smallest wins. The
    optimum lies in the relative interior of some face, so it is among them.
    """
    B = np.asarray(B, dtype=float)
    m, n = B.shape
    obj = lambda w: 0.5 * w @ w + C * np.maximum(0.0, 1.0 - B @ w).sum()  # noqa: E731
    best_w, best = np.zeros(n), obj(np.zeros(n))
    for mask in itertools.product((0, 1), repeat=m):
        S = np.flatnonzero(mask)
        g = C * B[S].sum(axis=0)
        rest = [i for i in range(m) if not mask[i]]
        for k in range(0, min(n, len(rest)) + 1):
            for E in itertools.combinations(rest, k):
                E = list(E)
                if E:
                    Be = B[E]
                    if np.linalg.matrix_rank(Be) < len(E):
                        continue
                    # min 0.5|w|^2 - g.w  s.t. Be w = 1
                    K = np.block([[np.eye(n), Be.T], [Be, np.zeros((k, k))]])
                    try:
                        sol = np.linalg.solve(K, np.concatenate([g, np.ones(k)]))
                    except np.linalg.LinAlgError:
                        continue
                    w = sol[:n]
                else:
                    w = g
                f = obj(w)
                if f < best:
                    best, best_w = f, w
    return best, best_w


def lp_vertex_oracle(r) -> float:
    """``sum(u)`` at the minimizer of ``-u^T r`` over the vertices of ``[0, 1]^m``."""
    r = np.asarray(r, dtype=float)
    best_val, best_u = np.inf, None
    for u in itertools.product((0.0, 1.0), repeat=len(r)):
        u = np.asarray(u)
        val = -u @ r
        if val < best_val:
            best_val, best_u = val, u
    return float(best_u.sum())


def dense_C_oracle(p, Cs=None):
    """Best CV error over a dense log grid of positive ``C`` values."""
    Cs = np.logspace(-4, 4, 81) if Cs is None else Cs
    vals = [eval_F(p, feasible_point(p, float(C))) for C in Cs]
    i = int(np.argmin(vals))
    return vals[i], float(Cs[i])
