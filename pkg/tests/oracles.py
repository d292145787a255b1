"""Independent reference implementations used only by the tests.

Nothing here calls the library's solvers: losses are written from their
textbook definitions, maximisations are brute-force enumerations and convex
programs are handed to cvxpy.
"""

import itertools
import math

import cvxpy as cp
import numpy as np


def zero_one(yhat, y):
    return float(yhat != y)


def hamming(bits_hat, bits, d):
    return sum(a != b for a, b in zip(bits_hat, bits)) / d


def dcg(grades, perm, w):
    """``sum_i grades[i] * w[perm[i]]``: document ``i`` is placed at position ``perm[i]``."""
    return sum(g * w[p] for g, p in zip(grades, perm))


def ndcg_loss(perm, grades, w):
    best = max(dcg(grades, s, w) for s in itertools.permutations(range(len(grades))))
    return 1.0 - dcg(grades, perm, w) / best


def dcg_weights(d):
    return [1.0 / math.log2(i + 2) for i in range(d)]


def all_grades(d, k):
    return [np.array(g, dtype=float) for g in itertools.product(range(1, k + 1), repeat=d)]


def brute_assignment_value(C):
    d = len(C)
    return min(sum(C[i][s[i]] for i in range(d)) for s in itertools.permutations(range(d)))


def project_onto_hull(points, target):
    """Euclidean projection of ``target`` onto ``conv(points)`` (rows) with cvxpy."""
    P = np.asarray(points, dtype=float)
    beta = cp.Variable(len(P), nonneg=True)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(P.T @ beta - target)), [cp.sum(beta) == 1])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return P.T @ beta.value


def quadratic_conjugate(points, theta, lam=1.0):
    """``max_{mu in conv(points)} <theta, mu> - lam/2 |mu|^2``."""
    mu = project_onto_hull(points, np.asarray(theta) / lam)
    return float(theta @ mu - 0.5 * lam * mu @ mu), mu


def conv_fy_conjugate(label_points, loss_vectors, theta, lam=1.0):
    """``max_{mu in conv(label_points)} <theta, mu> - lam/2 |mu|^2 + min_j <mu, loss_vectors[j]>``."""
    R = np.asarray(label_points, dtype=float).T
    Lm = np.asarray(loss_vectors, dtype=float)
    beta = cp.Variable(R.shape[1], nonneg=True)
    t = cp.Variable()
    mu = R @ beta
    prob = cp.Problem(cp.Maximize(theta @ mu - 0.5 * lam * cp.sum_squares(mu) + t),
                      [cp.sum(beta) == 1, Lm @ mu >= t])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(prob.value)


def multiclass_points(K):
    """Label points ``e_y`` and loss vectors ``1 - e_yhat``."""
    eye = np.eye(K)
    return list(eye), [1.0 - e for e in eye]


def ndcg_points(d, k, w):
    """Label points ``-g / max DCG(g)`` for all grade vectors and loss vectors ``w[perm]``."""
    labels = []
    for g in all_grades(d, k):
        best = max(dcg(g, s, w) for s in itertools.permutations(range(d)))
        labels.append(-g / best)
    losses = [np.array([w[p] for p in s]) for s in itertools.permutations(range(d))]
    return labels, losses


def smooth_hinge(m):
    if m <= 0:
        return 1 - 2 * m
    if m < 1:
        return (1 - m) ** 2
    return 0.0


def numeric_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
