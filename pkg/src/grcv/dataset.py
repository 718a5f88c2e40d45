"""LIBSVM parsing, hold-out splits and T-fold partitions.

Samples are kept sparse (index -> value, 1-based) until the fold matrices are
built, at which point every row becomes ``y_i * x_i`` as a dense vector.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LibsvmFormatError",
    "Sample",
    "Dataset",
    "SplitSpec",
    "FoldPartition",
    "FoldMatrices",
    "parse_libsvm",
    "load_libsvm",
    "dump_libsvm",
    "split_holdout",
    "make_folds",
    "build_fold_matrices",
    "dense_rows",
]

DEFAULT_SEED = 42


class LibsvmFormatError(ValueError):
    """Raised for malformed LIBSVM input; carries the offending line number."""

    def __init__(self, lineno: int, msg: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}")


@dataclass(frozen=True)
class Sample:
    features: dict[int, float]
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        idx = list(self.features)
        if any(i < 1 for i in idx) or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("feature indices must be >= 1 and strictly increasing")

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        for i, v in self.features.items():
            x[i - 1] = v
        return x


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    dim: int

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset is empty")
        top = max((max(s.features, default=0) for s in self.samples), default=0)
        if self.dim < top:
            raise ValueError(f"dim={self.dim} is smaller than max feature index {top}")

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=float)

    def design(self, indices=None) -> np.ndarray:
        """Dense feature matrix for ``indices`` (all samples by default)."""
        if indices is None:
            indices = range(len(self.samples))
        return np.array([self.samples[i].dense(self.dim) for i in indices]).reshape(-1, self.dim)

    def scaled(self) -> "Dataset":
        """Copy with every feature linearly mapped to [-1, 1] (constant features left as is)."""
        X = self.design()
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        Z = np.where(hi > lo, 2.0 * (X - lo) / span - 1.0, X)
        samples = []
        for row, s in zip(Z, self.samples):
            feats = {int(j) + 1: float(row[j]) for j in np.flatnonzero(row)}
            samples.append(Sample(feats, s.label))
        return Dataset(tuple(samples), self.dim)


def _parse_label(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise LibsvmFormatError(lineno, f"bad label {tok!r}") from None


def parse_libsvm(text) -> Dataset:
    """Parse LIBSVM sparse text (``label idx:val ...``) into a binary Dataset.

    ``text`` may be ``str``, ``bytes`` or a readable stream. The two distinct raw
    labels are mapped to -1 (smaller) and +1 (larger).
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    raw = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        label = _parse_label(toks[0], lineno)
        feats: dict[int, float] = {}
        last = 0
        for tok in toks[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, f"expected index:value, got {tok!r}")
            try:
                j, x = int(key), float(val)
            except ValueError:
                raise LibsvmFormatError(lineno, f"bad pair {tok!r}") from None
            if j < 1:
                raise LibsvmFormatError(lineno, f"feature index {j} < 1")
            if j <= last:
                raise LibsvmFormatError(lineno, f"feature index {j} not increasing")
            last = j
            feats[j] = x
        raw.append((label, feats, lineno))

    if not raw:
        raise ValueError("no samples in input")
    distinct = sorted({r[0] for r in raw})
    if len(distinct) > 2:
        bad = next(ln for lab, _, ln in raw if lab == distinct[2])
        raise LibsvmFormatError(bad, f"more than two distinct labels: {distinct[:3]}...")
    if len(distinct) < 2:
        raise ValueError(f"need two distinct labels, found {distinct}")
    to_pm = {distinct[0]: -1, distinct[1]: 1}

    samples = tuple(Sample(f, to_pm[lab]) for lab, f, _ in raw)
    dim = max((max(s.features, default=0) for s in samples), default=0)
    return Dataset(samples, max(dim, 1))


def load_libsvm(path) -> Dataset:
    with open(path, "rb") as fh:
        return parse_libsvm(fh)


def dump_libsvm(ds: Dataset) -> str:
    lines = []
    for s in ds.samples:
        pairs = " ".join(f"{j}:{v!r}" for j, v in s.features.items())
        lines.append(f"{s.label:+d} {pairs}".rstrip())
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SplitSpec:
    l1: int
    l2: int
    T: int
    seed: int = DEFAULT_SEED

    def validate(self, n_samples: int | None = None):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.l1 < self.T:
            raise ValueError(f"l1={self.l1} must be at least T={self.T}")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        if n_samples is not None and self.l1 + self.l2 > n_samples:
            raise ValueError(f"l1 + l2 = {self.l1 + self.l2} exceeds dataset size {n_samples}")


def split_holdout(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; first l1 indices form the CV subset, the next l2 the test set."""
    spec.validate(len(ds))
    perm = np.random.default_rng(spec.seed).permutation(len(ds))
    return perm[: spec.l1].copy(), perm[spec.l1 : spec.l1 + spec.l2].copy()


@dataclass(frozen=True)
class FoldPartition:
    validation_idx: tuple[np.ndarray, ...]
    training_idx: tuple[np.ndarray, ...]
    m1: int
    m2: int
    dropped: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def T(self) -> int:
        return len(self.validation_idx)

    @property
    def used(self) -> np.ndarray:
        return np.concatenate(self.validation_idx)

    def to_json(self) -> str:
        return json.dumps(
            {
                "T": self.T,
                "m1": self.m1,
                "m2": self.m2,
                "validation_idx": [v.tolist() for v in self.validation_idx],
                "training_idx": [t.tolist() for t in self.training_idx],
                "dropped": self.dropped.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FoldPartition":
        d = json.loads(text)
        return cls(
            tuple(np.asarray(v, dtype=int) for v in d["validation_idx"]),
            tuple(np.asarray(t, dtype=int) for t in d["training_idx"]),
            d["m1"],
            d["m2"],
            np.asarray(d["dropped"], dtype=int),
        )


def make_folds(cv_indices, T: int, seed: int | None = None) -> FoldPartition:
    """Partition ``cv_indices`` into T equal folds of size floor(l1/T).

    Indices past ``T * floor(l1/T)`` are dropped and returned in ``dropped``.
    When ``seed`` is given the indices are shuffled first; otherwise the input
    order (already shuffled by :func:`split_holdout`) is kept.
    """
    cv = np.asarray(cv_indices, dtype=int)
    if T < 2:
        raise ValueError("T must be >= 2")
    if len(cv) < T:
        raise ValueError(f"need at least T={T} indices, got {len(cv)}")
    if seed is not None:
        cv = cv[np.random.default_rng(seed).permutation(len(cv))]
    m1 = len(cv) // T
    used, dropped = cv[: T * m1], cv[T * m1 :]
    blocks = [used[t * m1 : (t + 1) * m1] for t in range(T)]
    training = tuple(np.concatenate([blocks[s] for s in range(T) if s != t]) for t in range(T))
    return FoldPartition(tuple(blocks), training, m1, (T - 1) * m1, dropped.copy())


@dataclass(frozen=True)
class FoldMatrices:
    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]

    @property
    def T(self):
        return len(self.A)

    @property
    def m1(self):
        return self.A[0].shape[0]

    @property
    def m2(self):
        return self.B[0].shape[0]

    @property
    def n(self):
        return self.A[0].shape[1]


def dense_rows(ds: Dataset, indices) -> np.ndarray:
    """Rows ``y_i x_i^T`` for the given sample indices."""
    X = ds.design(indices)
    y = np.array([ds.samples[i].label for i in indices], dtype=float)
    return y[:, None] * X


def build_fold_matrices(ds: Dataset, fp: FoldPartition) -> FoldMatrices:
    A = tuple(dense_rows(ds, v) for v in fp.validation_idx)
    B = tuple(dense_rows(ds, t) for t in fp.training_idx)
    return FoldMatrices(A, B)
