import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsosp.decode import (ConvFYDecoder, SparseDistribution, argmax_decoder, binary_clip_decoder,
                          binary_margin_grid, convfy_decoder, expected_target_loss, gap_certificate,
                          sample)
from nsosp.errors import DomainError
from nsosp.loss_decomp import default_ndcg_weights, make_multiclass, make_ndcg
from nsosp.polytopes import label_hull_oracle, simplex_oracle
from nsosp.surrogate import BinaryLogistic, ConvFY, Regularizer, SmoothHinge

MC2 = make_multiclass(2)


def margin_theta(m):
    return np.array([m / 2.0, -m / 2.0])


@pytest.mark.parametrize("m,expected,bound", [(0.0, 0.5, 0.5), (0.5, 0.0, 0.125), (-0.25, 0.75, 0.75)])
def test_clip_decoder_examples(m, expected, bound):
    hinge = SmoothHinge(2)
    dist = binary_clip_decoder(margin_theta(m))
    assert expected_target_loss(dist, MC2, 0) == pytest.approx(expected)
    assert 0.5 * hinge.value(margin_theta(m), 0) == pytest.approx(bound)


@given(st.floats(-10, 10), st.integers(0, 1))
def test_clip_decoder_gap_for_smooth_hinge(m, y):
    hinge = SmoothHinge(2)
    theta = margin_theta(m)
    assert expected_target_loss(binary_clip_decoder(theta), MC2, y) <= 0.5 * hinge.value(theta, y) + 1e-12


@given(st.floats(-20, 20), st.integers(0, 1))
def test_clip_decoder_gap_for_base2_logistic(s, y):
    loss = BinaryLogistic(2.0)
    theta = np.array([s])
    dist = binary_clip_decoder(theta, slope=1 / (4 * math.log(2)))
    assert expected_target_loss(dist, MC2, y) <= 0.5 * loss.value(theta, y) + 1e-12


def test_gap_certificate_grid():
    hinge = SmoothHinge(2)
    grid = binary_margin_grid()
    assert len(grid) == 41
    assert gap_certificate(binary_clip_decoder, hinge, MC2, 0.5, grid).passed
    rep = gap_certificate(argmax_decoder, hinge, MC2, 0.5, grid)
    assert not rep.passed and rep.violations
    assert not gap_certificate(binary_clip_decoder, hinge, MC2, 0.9, grid).passed
    assert gap_certificate(argmax_decoder, hinge, MC2, 0.0, grid).passed


def test_sparse_distribution_validation():
    with pytest.raises(DomainError):
        SparseDistribution((0, 1), np.array([0.7, 0.7]))
    with pytest.raises(DomainError):
        SparseDistribution((0,), np.array([0.5, 0.5]))


def test_expected_loss_examples():
    assert expected_target_loss(SparseDistribution.point_mass(1), MC2, 1) == 0.0
    assert expected_target_loss(SparseDistribution((0, 1), np.array([0.5, 0.5])), MC2, 0) == 0.5


def test_sample_point_mass_and_determinism():
    rng = np.random.default_rng(0)
    assert sample(SparseDistribution.point_mass(3), rng) == 3
    dist = SparseDistribution((0, 1, 2), np.array([0.2, 0.3, 0.5]))
    a = [sample(dist, np.random.default_rng(5)) for _ in range(3)]
    b = [sample(dist, np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_sample_frequencies():
    rng = np.random.default_rng(1)
    dist = SparseDistribution((0, 1), np.array([0.25, 0.75]))
    draws = np.array([sample(dist, rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.25) < 0.01


def test_convfy_decoder_two_class_zero():
    reg = Regularizer.quadratic(simplex_oracle(2))
    dist = convfy_decoder(reg, MC2, np.zeros(2))
    np.testing.assert_allclose(sorted(dist.probs), [0.5, 0.5], atol=1e-9)
    loss = ConvFY(MC2)
    sol = loss.inner(np.zeros(2))
    # split identity at the worked example: 0.5 = 0.75 - 0.25
    assert expected_target_loss(dist, MC2, 0) == pytest.approx(
        loss.value(np.zeros(2), 0) - loss.fy_value_at(sol.xi, 0), abs=1e-9)


def test_convfy_decoder_concentrates_with_strong_scores():
    reg = Regularizer.quadratic(simplex_oracle(2))
    dist = convfy_decoder(reg, MC2, np.array([5.0, -5.0]))
    p0 = dict(zip(dist.support, dist.probs)).get(0, 0.0)
    assert p0 >= 1 - 1e-3


def test_convfy_decoder_ndcg_support():
    d = 3
    dec = make_ndcg(d, default_ndcg_weights(d), 3)
    reg = Regularizer.quadratic(label_hull_oracle(dec))
    rng = np.random.default_rng(2)
    for _ in range(10):
        dist = convfy_decoder(reg, dec, rng.normal(scale=2, size=d))
        assert len(dist) <= d + 1 <= d * d + 1
        assert all(0 <= h < math.factorial(d) for h in dist.support)


def test_convfy_decoder_class_reuses_inner_solution():
    loss = ConvFY(make_multiclass(3))
    dec = ConvFYDecoder(loss)
    theta = np.array([0.4, -0.2, 0.1])
    sol = loss.inner(theta)
    a, b = dec(theta, inner=sol), dec(theta)
    assert a.support == b.support
    np.testing.assert_allclose(a.probs, b.probs)
