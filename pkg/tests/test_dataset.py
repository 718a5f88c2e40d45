import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grcv.dataset import (
    LibsvmFormatError,
    SplitSpec,
    build_fold_matrices,
    dump_libsvm,
    make_folds,
    parse_libsvm,
    split_holdout,
)
from helpers import noisy_dataset


def test_parse_basic():
    ds = parse_libsvm("+1 1:0.5 3:-2\n-1 2:1\n")
    assert len(ds) == 2 and ds.dim == 3
    np.testing.assert_array_equal(ds.labels, [1, -1])
    np.testing.assert_array_equal(ds.design(), [[0.5, 0, -2], [0, 1, 0]])


def test_labels_mapped_by_order():
    ds = parse_libsvm("2 1:1\n4 1:2\n2 1:3\n")
    np.testing.assert_array_equal(ds.labels, [-1, 1, -1])


def test_comments_and_blank_lines_skipped():
    ds = parse_libsvm("# header\n\n1 1:1  # trailing\n0 1:2\n")
    assert len(ds) == 2


@pytest.mark.parametrize(
    "text, lineno",
    [
        ("1 1:1\n-1 1-2\n", 2),
        ("1 1:1\n-1 0:2\n", 2),
        ("1 2:1 1:3\n-1 1:1\n", 1),
        ("1 1:x\n-1 1:1\n", 1),
        ("a 1:1\n", 1),
        ("1 1:1\n2 1:1\n3 1:1\n", 3),
    ],
)
def test_parse_errors_report_line(text, lineno):
    with pytest.raises(LibsvmFormatError) as exc:
        parse_libsvm(text)
    assert exc.value.lineno == lineno


def test_single_label_rejected():
    with pytest.raises(ValueError):
        parse_libsvm("1 1:1\n1 1:2\n")


rows = st.lists(
    st.tuples(
        st.sampled_from([-1, 1]),
        st.dictionaries(st.integers(1, 6), st.floats(-1e3, 1e3, allow_nan=False).filter(lambda x: x != 0), max_size=4),
    ),
    min_size=2,
    max_size=12,
).filter(lambda r: len({lab for lab, _ in r}) == 2)


@settings(max_examples=60, deadline=None)
@given(rows)
def test_dump_parse_roundtrip(data):
    text = "".join(f"{lab} " + " ".join(f"{j}:{v!r}" for j, v in sorted(f.items())) + "\n" for lab, f in data)
    ds = parse_libsvm(text)
    again = parse_libsvm(dump_libsvm(ds))
    np.testing.assert_array_equal(again.labels, ds.labels)
    np.testing.assert_array_equal(again.design(), ds.design()[:, : again.dim])


def test_scaled_range():
    ds = noisy_dataset(0, 30).scaled()
    X = ds.design()
    assert np.all(X >= -1 - 1e-12) and np.all(X <= 1 + 1e-12)
    assert np.allclose(X.min(axis=0), -1) and np.allclose(X.max(axis=0), 1)


def test_split_sizes_and_disjoint():
    ds = noisy_dataset(0, 270)
    cv, test = split_holdout(ds, SplitSpec(189, 81, 3))
    assert len(cv) == 189 and len(test) == 81
    assert not set(cv) & set(test)


def test_split_deterministic():
    ds = noisy_dataset(0, 50)
    a = split_holdout(ds, SplitSpec(30, 10, 3, seed=5))
    b = split_holdout(ds, SplitSpec(30, 10, 3, seed=5))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_allows_empty_test_set():
    ds = noisy_dataset(0, 12)
    cv, test = split_holdout(ds, SplitSpec(12, 0, 3))
    assert len(cv) == 12 and len(test) == 0


@pytest.mark.parametrize("spec", [SplitSpec(40, 20, 3), SplitSpec(10, 0, 1), SplitSpec(2, 0, 3)])
def test_split_validation(spec):
    with pytest.raises(ValueError):
        split_holdout(noisy_dataset(0, 50), spec)


def test_T_message():
    with pytest.raises(ValueError, match="T must be"):
        SplitSpec(10, 0, 1).validate()


def test_folds_truncation():
    fp = make_folds(np.arange(10), 3)
    assert (fp.m1, fp.m2) == (3, 6)
    assert len(fp.dropped) == 1
    fp = make_folds(np.arange(189), 3)
    assert (fp.m1, fp.m2) == (63, 126)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 6), st.integers(0, 5))
def test_folds_partition(l1, T, seed):
    if l1 < T:
        return
    fp = make_folds(np.arange(l1), T, seed=seed)
    used = np.concatenate(fp.validation_idx)
    assert len(set(used.tolist())) == T * (l1 // T)
    for t in range(T):
        assert len(fp.validation_idx[t]) == fp.m1
        assert set(fp.training_idx[t]) == set(used) - set(fp.validation_idx[t])
    assert set(used) | set(fp.dropped) == set(range(l1))


def test_fold_json_roundtrip():
    fp = make_folds(np.arange(11), 3, seed=1)
    back = type(fp).from_json(fp.to_json())
    assert back.to_json() == fp.to_json()


def test_fold_matrices_rows_are_signed():
    ds = noisy_dataset(2, 12)
    fp = make_folds(np.arange(12), 3)
    fm = build_fold_matrices(ds, fp)
    X, y = ds.design(), ds.labels
    for t in range(3):
        np.testing.assert_array_equal(fm.A[t], y[fp.validation_idx[t], None] * X[fp.validation_idx[t]])
        np.testing.assert_array_equal(fm.B[t], y[fp.training_idx[t], None] * X[fp.training_idx[t]])
    assert (fm.T, fm.m1, fm.m2, fm.n) == (3, 4, 8, 2)
