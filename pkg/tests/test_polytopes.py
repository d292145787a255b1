import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from nsosp.errors import DomainError
from nsosp.loss_decomp import default_ndcg_weights, make_ndcg
from nsosp.polytopes import (ActiveSet, assignment_lmo, birkhoff_oracle, caratheodory_reduce,
                             frank_wolfe_min, label_hull_oracle, min_norm_point, project_ball,
                             project_polytope, project_simplex, simplex_oracle, vertex_oracle)
from nsosp.surrogate import Regularizer, solve_birkhoff


def sq(target):
    target = np.asarray(target, dtype=float)
    return lambda x: (0.5 * float((x - target) @ (x - target)), x - target)


def test_assignment_examples():
    assert assignment_lmo([[1, 2], [3, 0]]) == (0, 1)
    perm = assignment_lmo(np.zeros((3, 3)))
    assert sorted(perm) == [0, 1, 2]


@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
def test_assignment_matches_enumeration(C):
    perm = assignment_lmo(C)
    assert sum(C[i, perm[i]] for i in range(4)) == pytest.approx(oracles.brute_assignment_value(C), abs=1e-9)


def test_assignment_rejects_bad_input():
    with pytest.raises(DomainError):
        assignment_lmo(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        assignment_lmo([[np.nan, 0], [0, 0]])


def test_fw_vertex_target():
    res = frank_wolfe_min(simplex_oracle(3), sq([0, 1, 0]), tol=1e-10)
    np.testing.assert_allclose(res.x, [0, 1, 0], atol=1e-8)
    assert res.gap <= 1e-8


def test_fw_centre_of_segment():
    res = frank_wolfe_min(simplex_oracle(2), sq([0.5, 0.5]), tol=1e-12, lipschitz=1.0)
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-6)


@given(arrays(np.float64, 5, elements=st.floats(-3, 3)))
def test_fw_projection_matches_sort_based(v):
    res = frank_wolfe_min(simplex_oracle(5), sq(v), tol=1e-12, lipschitz=1.0, max_iters=20000)
    np.testing.assert_allclose(res.x, project_simplex(v), atol=1e-5)
    assert res.active.validate()


def test_fw_backtracking_without_lipschitz():
    rng = np.random.default_rng(1)
    V = rng.normal(size=(8, 3))
    A = np.diag([1.0, 5.0, 20.0])
    c = rng.normal(size=3)
    res = frank_wolfe_min(vertex_oracle(V), lambda x: (0.5 * (x - c) @ A @ (x - c), A @ (x - c)),
                          tol=1e-9, max_iters=50000)
    assert res.converged
    ref = oracles.project_onto_hull(V @ np.sqrt(A), np.sqrt(A) @ c)
    # compare objective values: the reference solves the same problem after a change of variables
    assert res.value == pytest.approx(0.5 * float((ref - np.sqrt(A) @ c) @ (ref - np.sqrt(A) @ c)), abs=1e-7)


def test_caratheodory_keeps_small_sets():
    a = ActiveSet([0, 1], [np.array([0.0, 0.0]), np.array([1.0, 0.0])], [0.3, 0.7])
    b = caratheodory_reduce(a, 2)
    assert b.handles == a.handles and b.weights == a.weights


def test_caratheodory_square_interior_point():
    V = [np.array(v, dtype=float) for v in ((0, 0), (1, 0), (0, 1), (1, 1))]
    a = ActiveSet([0, 1, 2, 3], V, [0.25, 0.25, 0.25, 0.25])
    b = caratheodory_reduce(a, 2)
    assert len(b) <= 3
    np.testing.assert_allclose(b.point(), [0.5, 0.5], atol=1e-12)
    assert b.validate()


def test_caratheodory_birkhoff():
    oracle = birkhoff_oracle(3)
    rng = np.random.default_rng(3)
    w = rng.dirichlet(np.ones(6))
    a = ActiveSet(list(range(6)), [oracle.vertex(h) for h in range(6)], list(w))
    b = caratheodory_reduce(a, 4)
    assert len(b) <= 5
    np.testing.assert_allclose(b.point(), a.point(), atol=1e-12)


@given(st.integers(2, 6), st.data())
def test_caratheodory_random(n_dim, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    m = n_dim + 1 + data.draw(st.integers(1, 6))
    V = list(rng.normal(size=(m, n_dim)))
    w = rng.dirichlet(np.ones(m))
    a = ActiveSet(list(range(m)), V, list(w))
    b = caratheodory_reduce(a, n_dim)
    assert len(b) <= n_dim + 1
    assert b.validate(1e-9)
    np.testing.assert_allclose(b.point(), a.point(), atol=1e-9)


def test_project_ball_examples():
    W = np.array([[3.0, 4.0]])
    np.testing.assert_array_equal(project_ball(W, 10), W)
    big = np.array([[12.0, 16.0]])
    assert np.linalg.norm(project_ball(big, 10)) == pytest.approx(10.0)
    np.testing.assert_array_equal(project_ball(np.zeros((2, 2)), 10), 0)


def test_project_polytope_examples():
    oracle = simplex_oracle(2)
    np.testing.assert_allclose(project_polytope(oracle, [0.3, 0.7]), [0.3, 0.7], atol=1e-12)
    np.testing.assert_allclose(project_polytope(oracle, [2.0, 0.0]), [1.0, 0.0], atol=1e-12)


@given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_project_polytope_simplex(v):
    np.testing.assert_allclose(project_polytope(simplex_oracle(3), v), project_simplex(v), atol=1e-6)


@given(st.integers(0, 10_000))
def test_min_norm_point_matches_cvxpy(seed):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(int(rng.integers(3, 12)), 3))
    p = rng.normal(size=3) * 2
    res = min_norm_point(vertex_oracle(V), p)
    assert res.converged and len(res.active) <= 4
    np.testing.assert_allclose(res.x, oracles.project_onto_hull(V, p), atol=1e-6)


def test_label_hull_projection_with_repeated_points():
    dec = make_ndcg(3, default_ndcg_weights(3), 3)
    oracle = label_hull_oracle(dec)
    labels, _ = oracles.ndcg_points(3, 3, oracles.dcg_weights(3))
    assert oracle.n_vertices < len(labels)
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = rng.normal(size=3)
        np.testing.assert_allclose(project_polytope(oracle, p), oracles.project_onto_hull(labels, p),
                                   atol=1e-6)


def test_birkhoff_vertices_are_permutation_matrices():
    oracle = birkhoff_oracle(3)
    for P in oracle.vertices():
        P = P.reshape(3, 3)
        np.testing.assert_array_equal(P.sum(axis=0), 1)
        np.testing.assert_array_equal(P.sum(axis=1), 1)


def test_birkhoff_instance_matches_oracles():
    d = 3
    dec = make_ndcg(d, default_ndcg_weights(d), 3)
    w = oracles.dcg_weights(d)
    labels, losses = oracles.ndcg_points(d, 3, w)
    reg = Regularizer.quadratic(label_hull_oracle(dec))
    rng = np.random.default_rng(20)
    perms = list(itertools.permutations(range(d)))
    # grid over the 6 permutation vertices with step 1/10
    grid = np.array([c for c in itertools.product(range(11), repeat=6) if sum(c) == 10]) / 10.0
    for _ in range(3):
        theta = rng.normal(scale=2.0, size=d)
        res = solve_birkhoff(reg, theta, w)
        assert res.gap <= 1e-8 and len(res.active) <= d * d + 1
        assert res.value == pytest.approx(oracles.conv_fy_conjugate(labels, losses, theta), abs=1e-6)
        nus = grid @ np.array([[w[s[i]] for i in range(d)] for s in perms])
        grid_best = min(oracles.quadratic_conjugate(labels, theta + nu)[0] for nu in nus[::37])
        assert res.value <= grid_best + 1e-9
