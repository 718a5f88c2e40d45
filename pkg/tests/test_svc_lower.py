import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grcv.svc_lower import (
    SvcSolution,
    classify_training_points,
    dual_objective,
    lower_kkt_residual,
    misclassification_count,
    predict,
    primal_objective,
    train_l1_svc,
)
from helpers import qp_oracle


def test_single_point_closed_form():
    # one row b: alpha = min(1/|b|^2, C)
    b = np.array([[2.0, 0.0]])
    sol = train_l1_svc(b, 1.0)
    assert sol.alpha[0] == pytest.approx(0.25)
    np.testing.assert_allclose(sol.w, [0.5, 0.0])
    sol = train_l1_svc(b, 0.1)
    assert sol.alpha[0] == pytest.approx(0.1)
    assert sol.xi[0] == pytest.approx(1 - 0.4)


def test_zero_C():
    sol = train_l1_svc(np.eye(3), 0.0)
    assert np.all(sol.alpha == 0) and np.all(sol.w == 0)
    np.testing.assert_allclose(sol.xi, 1.0)


def test_input_validation():
    with pytest.raises(ValueError):
        train_l1_svc(np.eye(2), -1.0)
    with pytest.raises(ValueError):
        train_l1_svc(np.zeros((0, 2)), 1.0)


instances = st.tuples(
    st.integers(1, 6).flatmap(lambda m: arrays(float, (m, 2), elements=st.integers(-30, 30).map(lambda k: k / 10))),
    st.sampled_from([0.1, 1.0, 10.0]),
)


@settings(max_examples=80, deadline=None)
@given(instances)
def test_matches_face_enumeration_oracle(inst):
    B, C = inst
    sol = train_l1_svc(B, C)
    best, _ = qp_oracle(B, C)
    assert primal_objective(B, C, sol.w) == pytest.approx(best, abs=1e-6)
    assert lower_kkt_residual(sol, B) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(instances)
def test_strong_duality_and_box(inst):
    B, C = inst
    sol = train_l1_svc(B, C)
    assert np.all(sol.alpha >= 0) and np.all(sol.alpha <= C)
    assert primal_objective(B, C, sol.w, sol.xi) == pytest.approx(dual_objective(B, sol.alpha), abs=1e-6)
    np.testing.assert_allclose(sol.mu, C - sol.alpha, atol=1e-12)


def test_kkt_residual_detects_perturbation():
    B = np.array([[1.0, 0.5], [0.2, 1.5], [-0.3, 0.4]])
    sol = train_l1_svc(B, 1.0)
    assert lower_kkt_residual(sol, B) <= 1e-8
    bad = SvcSolution(sol.w + 0.1, sol.xi, sol.alpha, sol.mu, sol.C)
    assert lower_kkt_residual(bad, B) >= 0.1 - 1e-12


def test_large_instance_converges():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(120, 5))
    sol = train_l1_svc(B, 10.0)
    assert sol.status == "converged"
    assert lower_kkt_residual(sol, B) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(instances)
def test_training_partition_covers(inst):
    B, C = inst
    sol = train_l1_svc(B, C)
    part = classify_training_points(sol, B)
    sets = part.sets()
    flat = sorted(i for s in sets.values() for i in s)
    assert flat == list(range(B.shape[0]))
    assert sorted(part.L3_plus + part.L3_c) == sorted(part.L3)


def test_training_partition_patterns():
    # 1-D rows: b=2 sits on the margin, b=-1 is misclassified, b=5 is outside
    B = np.array([[2.0], [5.0]])
    sol = train_l1_svc(B, 10.0)
    part = classify_training_points(sol, B)
    assert part.L3 == [0] and part.L2 == [1]
    B = np.array([[1.0], [-1.0]])
    sol = train_l1_svc(B, 0.5)  # alpha = (0.5, 0.5), w = 0, both xi = 1
    part = classify_training_points(sol, B)
    assert part.L5 == [0, 1]


def test_predict_tie_goes_positive():
    np.testing.assert_array_equal(predict([1.0, -1.0], [[1, 1], [0, 1], [2, 1]]), [1, -1, 1])
    assert misclassification_count([1.0, 0.0], [[1, 0], [-1, 0], [0, 3]], [1, 1, -1]) == 2
