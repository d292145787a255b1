import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsosp import harness
from nsosp.checks import prop1_instance
from nsosp.errors import DomainError, InvariantViolation
from nsosp.ogd import (LearnerState, LrPolicy, dynamic_regret_bound, lr_adagrad, lr_constant,
                       lr_polyak, step, theorem_bound)


def test_lr_constant_examples():
    assert lr_constant(0.5, 1 / math.log(2)) == pytest.approx(math.log(2) / 2)
    assert lr_constant(0.5, 4.0) == 0.125
    assert lr_constant(1 - 1e-12, 1.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        lr_constant(1.0, 1.0)


def test_lr_adagrad_examples():
    assert lr_adagrad(20.0, 2.0) == 10.0
    assert lr_adagrad(20.0, 0.0) is None


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30))
def test_adagrad_is_non_increasing(grads):
    cum, prev = 0.0, math.inf
    for g in grads:
        cum += g
        eta = lr_adagrad(20.0, cum)
        if eta is not None:
            assert eta <= prev
            prev = eta


def test_lr_polyak_examples():
    assert lr_polyak(1.0, 0.25, 2.0, math.inf) == 0.75
    assert lr_polyak(1.0, 0.25, 0.0, math.inf) is None
    assert lr_polyak(1.0, 0.25, 2.0, 0.5) == 0.5
    # equal surrogate and expected loss with a non-zero gradient: no update
    assert lr_polyak(0.5, 0.5, 2.0, 1.0) is None
    assert lr_polyak(0.5, 0.5, 2.0, 1.0, floor=0.125, strict=True) == 0.125
    with pytest.raises(InvariantViolation):
        lr_polyak(0.2, 0.5, 1.0, 1.0)


def test_step_examples():
    s = LearnerState(np.array([0.5]), 10.0)
    step(s, np.array([0.2]), 1.0)
    assert s.W[0] == pytest.approx(0.3)
    s = LearnerState(np.array([[1.0, 2.0]]), 10.0)
    step(s, np.zeros((1, 2)), 0.3)
    np.testing.assert_array_equal(s.W, [[1.0, 2.0]])
    s = LearnerState(np.zeros(2), 10.0)
    step(s, np.array([-12.0, -16.0]), 1.0)
    assert np.linalg.norm(s.W) == pytest.approx(10.0)
    before = s.W.copy()
    step(s, np.ones(2), None)
    np.testing.assert_array_equal(s.W, before)
    assert s.t == 2


def test_dynamic_regret_bound_examples():
    assert dynamic_regret_bound(2.0, 1.0, [1.0, 1.0], [0.0, 0.0], 0.0) == 2.0
    assert dynamic_regret_bound(2.0, 0.5, [1.0, 0.5], [0.0, 0.0], 3.0) == 16.0
    assert dynamic_regret_bound(2.0, 0.5, [1.0, 0.5], [2.0, 4.0], 3.0) == 16.0 + 1.0 + 1.0
    with pytest.raises(DomainError):
        dynamic_regret_bound(2.0, 1.0, [0.5, 1.0], [0.0, 0.0], 0.0)


def test_theorem_bound_examples():
    assert theorem_bound(0.0, 3.0, 2.0, 8.0) == 64.0
    assert theorem_bound(5.0, 0.0, 2.0, 8.0) == 5.0 + 8.0 * 2.0
    assert theorem_bound(0.0, 0.0, 0.0, 8.0) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
def test_dynamic_regret_property(seed):
    regret, bound = prop1_instance(np.random.default_rng(seed), T=30)
    assert regret <= bound + 1e-6


def test_policy_validation():
    with pytest.raises(DomainError):
        LrPolicy("newton")
    with pytest.raises(DomainError):
        LrPolicy("adagrad")
    with pytest.raises(DomainError):
        LrPolicy("polyak", mode="lenient")


@pytest.mark.parametrize("surrogate", ["binary-logistic", "smooth-hinge"])
@pytest.mark.parametrize("policy", harness.POLICIES)
def test_fast_path_matches_generic_learner(surrogate, policy):
    cfg = harness.make_config(T=400, flips=3, trials=1, surrogate=surrogate, policies=(policy,))
    fast = np.array(harness.run_trial(cfg, policy, 0).rows)
    slow = np.array(harness.run_trial(dataclasses.replace(cfg, fast=False), policy, 0).rows)
    np.testing.assert_allclose(fast, slow, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("policy", harness.POLICIES)
def test_learning_rates_non_increasing(policy):
    cfg = harness.make_config(T=2000, flips=10, trials=1, policies=(policy,))
    eta = harness.run_trial(cfg, policy, 0).column("eta")
    eta = eta[np.isfinite(eta)]
    assert np.all(np.diff(eta) <= 0)


def test_generic_learner_on_conv_fy():
    cfg = harness.make_config(env="segmented-separable", T=200, K=3, segments=2, surrogate="conv-fy",
                              decoder="conv-fy", D=10, trials=1, policies=("polyak",))
    run = harness.run_trial(cfg, "polyak", 0)
    E, L = run.column("expected_target"), run.column("surrogate")
    assert np.all(E <= L + 1e-9)
