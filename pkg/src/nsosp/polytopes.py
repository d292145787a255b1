"""Linear minimisation oracles, pairwise Frank-Wolfe and Euclidean projections.

Every polytope is described by its vertices through a linear minimisation
oracle (LMO) returning ``(vertex, handle)``. Frank-Wolfe keeps the iterate as
an explicit convex combination of vertices (:class:`ActiveSet`), which is
what randomized decoding samples from.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, NumericError

DEFAULT_TOL = 1e-8


def assignment_lmo(cost):
    """Permutation ``sigma`` minimising ``sum_i cost[i, sigma[i]]``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DomainError(f"assignment needs a square matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise DomainError("assignment cost has non-finite entries")
    _, cols = linear_sum_assignment(cost)
    return tuple(int(c) for c in cols)


class PolytopeOracle:
    """Vertex-described polytope in ``R^dim``.

    Parameters
    ----------
    dim : int
        Ambient dimension.
    lmo : callable
        ``lmo(direction) -> (vertex, handle)`` minimising ``<direction, v>``.
    vertex : callable, optional
        ``vertex(handle) -> ndarray``.
    kind : str
        Free-form tag; ``"simplex"`` enables closed-form projection.
    """

    def __init__(self, dim, lmo, vertex=None, kind="generic", n_vertices=None):
        self.dim = dim
        self.lmo = lmo
        self.vertex = vertex
        self.kind = kind
        self.n_vertices = n_vertices

    def vertices(self):
        if self.vertex is None or self.n_vertices is None:
            raise DomainError(f"{self.kind} polytope is oracle-only")
        return np.array([self.vertex(h) for h in range(self.n_vertices)])


def vertex_oracle(vertices, kind="vertices"):
    """Polytope given by an explicit vertex list (rows). Ties go to the lowest row."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))

    def lmo(direction):
        h = int(np.argmin(V @ direction))
        return V[h], h

    return PolytopeOracle(V.shape[1], lmo, vertex=lambda h: V[h], kind=kind, n_vertices=len(V))


def simplex_oracle(n):
    eye = np.eye(n)

    def lmo(direction):
        h = int(np.argmin(direction))
        return eye[h], h

    return PolytopeOracle(n, lmo, vertex=lambda h: eye[h], kind="simplex", n_vertices=n)


def birkhoff_oracle(d):
    """Birkhoff polytope; vertices are flattened permutation matrices ``P[i, sigma[i]] = 1``."""
    from .loss_decomp import permutation_rank, permutation_unrank

    def as_matrix(perm):
        P = np.zeros((d, d))
        P[np.arange(d), list(perm)] = 1.0
        return P.ravel()

    def lmo(direction):
        perm = assignment_lmo(np.reshape(direction, (d, d)))
        return as_matrix(perm), permutation_rank(perm)

    return PolytopeOracle(
        d * d, lmo,
        vertex=lambda h: as_matrix(permutation_unrank(h, d)),
        kind="birkhoff", n_vertices=math.factorial(d),
    )


def prediction_oracle(decomp):
    """``conv{ell_rho(yhat)}``, the loss-vector hull searched by decoding."""
    return PolytopeOracle(decomp.dim, decomp.lmo, vertex=decomp.ell_rho,
                          kind=f"{decomp.name}-predictions", n_vertices=decomp.n_predictions)


def label_hull_oracle(decomp):
    """``conv{rho(y)}`` by enumeration; the simplex is recognised for multiclass.

    Labels sharing the same ``rho`` (for NDCG, all constant grade vectors)
    are merged, so handles index distinct points rather than labels.
    Repeated vertices slow pairwise Frank-Wolfe down considerably.
    """
    if decomp.name == "multiclass":
        return simplex_oracle(decomp.dim)
    R = np.array([decomp.rho(y) for y in decomp.labels()])
    _, first = np.unique(np.round(R, 12), axis=0, return_index=True)
    return vertex_oracle(R[np.sort(first)], kind=f"{decomp.name}-labels")


@dataclass
class ActiveSet:
    """Convex combination ``sum_i weights[i] * vertices[i]``."""

    handles: list = field(default_factory=list)
    vertices: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def __len__(self):
        return len(self.handles)

    def point(self):
        return np.asarray(self.weights) @ np.asarray(self.vertices)

    def add(self, handle, vertex, weight):
        try:
            i = self.handles.index(handle)
        except ValueError:
            self.handles.append(handle)
            self.vertices.append(np.asarray(vertex, dtype=float))
            self.weights.append(float(weight))
        else:
            self.weights[i] += weight

    def remove(self, i):
        del self.handles[i], self.vertices[i], self.weights[i]

    def copy(self):
        return ActiveSet(list(self.handles), list(self.vertices), list(self.weights))

    def validate(self, atol=1e-9):
        w = np.asarray(self.weights)
        return bool(np.all(w >= -atol) and abs(w.sum() - 1.0) <= atol)


@dataclass
class FWResult:
    active: ActiveSet
    x: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool


def frank_wolfe_min(oracle, objective, tol=DEFAULT_TOL, max_iters=None, lipschitz=None,
                    init: Optional[ActiveSet] = None, reduce_dim=None, trace=None,
                    curvature: Optional[Callable] = None):
    """Minimise a smooth convex function over a polytope with pairwise Frank-Wolfe.

    Parameters
    ----------
    oracle : PolytopeOracle
    objective : callable
        ``objective(x) -> (value, gradient)``.
    tol : float
        Stop once the Frank-Wolfe duality gap ``<g, x - s>`` is at most ``tol``.
    max_iters : int, optional
        Defaults to ``max(1000, 10 * dim**2)``.
    lipschitz : float, optional
        Gradient Lipschitz constant; the short step ``<-g, d> / (L |d|^2)`` is
        used. Without it a local constant is estimated by backtracking on the
        change of the directional derivative along ``d``.
    init : ActiveSet, optional
        Warm start; copied, never mutated.
    reduce_dim : int, optional
        If given, the final active set is Caratheodory-reduced to at most
        ``reduce_dim + 1`` vertices.
    trace : list, optional
        Receives ``(iteration, x, active-set point)`` after every update.
    curvature : callable, optional
        ``curvature(d)`` bounds ``d^T H d`` along a direction; it replaces
        ``lipschitz * |d|^2`` in the short step. Useful when the objective
        depends on ``x`` only through a low-rank map.

    Returns
    -------
    FWResult
        ``converged`` is False when ``max_iters`` ran out; ``gap`` is the
        certificate actually achieved.
    """
    if max_iters is None:
        max_iters = max(1000, 10 * oracle.dim ** 2)
    if init is not None and len(init):
        active = init.copy()
    else:
        v0, h0 = oracle.lmo(np.zeros(oracle.dim))
        active = ActiveSet([h0], [np.asarray(v0, dtype=float)], [1.0])

    L = lipschitz if lipschitz is not None else 1.0
    x = active.point()
    value, g = objective(x)
    gap = math.inf
    converged = False
    it = 0
    while True:
        if not (np.isfinite(value) and np.all(np.isfinite(g))):
            raise NumericError("Frank-Wolfe objective returned non-finite values", gap=gap)
        s, hs = oracle.lmo(g)
        s = np.asarray(s, dtype=float)
        gap = float(g @ (x - s))
        if gap <= tol:
            converged = True
            break
        if it >= max_iters:
            break
        it += 1

        V = np.asarray(active.vertices)
        ia = int(np.argmax(V @ g))
        d = s - V[ia]
        max_step = active.weights[ia]
        slope = -float(g @ d)
        dd = float(d @ d)
        if dd == 0.0 or slope <= 0.0:
            # numerically flat: the away vertex is the FW vertex
            break

        if curvature is not None or lipschitz is not None:
            curv = curvature(d) if curvature is not None else L * dd
            step = max_step if curv <= 0.0 else min(max_step, slope / curv)
            x_new = x + step * d
            value_new, g_new = objective(x_new)
        else:
            # Curvature test on gradients rather than on function values: near
            # the optimum the decrease is below the rounding error of f.
            L = max(L * 0.5, 1e-12)
            for _ in range(64):
                step = min(max_step, slope / (L * dd))
                x_new = x + step * d
                value_new, g_new = objective(x_new)
                if float((g_new - g) @ d) <= L * step * dd:
                    break
                L *= 2.0

        active.weights[ia] -= step
        active.add(hs, s, step)
        if step >= max_step:
            active.remove(ia)
        x = active.point()
        if np.max(np.abs(x - x_new)) > 1e-12:
            value, g = objective(x)
        else:
            value, g = value_new, g_new
        if trace is not None:
            trace.append((it, x_new, x))

    if reduce_dim is not None and len(active) > reduce_dim + 1:
        active = caratheodory_reduce(active, reduce_dim)
        x = active.point()
        value, g = objective(x)
    return FWResult(active, x, float(value), gap, it, converged)


def caratheodory_reduce(active: ActiveSet, dim) -> ActiveSet:
    """Rewrite the convex combination with at most ``dim + 1`` vertices.

    Repeatedly finds an affine dependency ``sum c_i v_i = 0, sum c_i = 0``
    among the support and moves the weights along it until one hits zero.
    """
    active = active.copy()
    while len(active) > dim + 1:
        V = np.asarray(active.vertices)
        A = np.vstack([V.T, np.ones(len(V))])
        _, sv, vt = np.linalg.svd(A)
        c = vt[-1]
        if c.max() <= 0:
            c = -c
        w = np.asarray(active.weights)
        pos = c > 1e-14 * np.abs(c).max()
        ratios = np.full(len(w), np.inf)
        ratios[pos] = w[pos] / c[pos]
        i = int(np.argmin(ratios))
        w = w - ratios[i] * c
        w[i] = 0.0
        w = np.maximum(w, 0.0)
        active.weights = list(w)
        active.remove(i)
    return active


def project_ball(W, radius):
    """Frobenius projection onto ``{W : |W|_F <= radius}``."""
    W = np.asarray(W, dtype=float)
    norm = np.linalg.norm(W)
    if norm <= radius:
        return W
    return W * (radius / norm)


def project_simplex(v):
    """Sort-based Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _affine_minimizer(B):
    """Weights ``a`` with ``sum a = 1`` minimising ``|B^T a|`` (rows of ``B`` are points)."""
    n = len(B)
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = B @ B.T
    K[:n, n] = K[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n]


def min_norm_point(oracle, point, tol=1e-13, max_iters=None, init=None):
    """Euclidean projection onto a polytope by Wolfe's min-norm-point algorithm.

    Keeps a corral of affinely independent vertices and alternates a linear
    minimisation step with exact affine minimisation over the corral, so it
    terminates after finitely many major cycles. Only ``oracle.lmo`` is used.
    ``init`` (an :class:`ActiveSet`) is accepted for interface compatibility;
    its heaviest vertex seeds the corral.
    """
    point = np.asarray(point, dtype=float)
    if max_iters is None:
        max_iters = max(1000, 10 * oracle.dim ** 2)
    if init is not None and len(init):
        j = int(np.argmax(init.weights))
        active = ActiveSet([init.handles[j]], [np.asarray(init.vertices[j], dtype=float)], [1.0])
    else:
        v0, h0 = oracle.lmo(-point)
        active = ActiveSet([h0], [np.asarray(v0, dtype=float)], [1.0])
    x = active.point()
    gap = math.inf
    converged = False
    it = 0
    while True:
        r = x - point
        q, hq = oracle.lmo(r)
        q = np.asarray(q, dtype=float)
        gap = float(r @ (x - q))
        # the certificate is compared relative to the squared distance, so
        # far-away points are not held to an absolute 1e-13
        if gap <= tol * max(1.0, float(r @ r)):
            converged = True
            break
        if it >= max_iters or hq in active.handles:
            break
        it += 1
        active.add(hq, q, 0.0)
        while True:
            B = np.asarray(active.vertices) - point
            a = _affine_minimizer(B)
            lam = np.asarray(active.weights)
            if np.all(a > 1e-14):
                active.weights = list(a / a.sum())
                break
            neg = a <= 1e-14
            ratios = lam[neg] / (lam[neg] - a[neg])
            theta = float(np.min(ratios))
            lam = theta * a + (1.0 - theta) * lam
            lam[np.flatnonzero(neg)[np.argmin(ratios)]] = 0.0
            lam = np.maximum(lam, 0.0)
            keep = lam > 0.0
            active = ActiveSet([h for h, k in zip(active.handles, keep) if k],
                               [v for v, k in zip(active.vertices, keep) if k],
                               list(lam[keep] / lam[keep].sum()))
        x = active.point()
    r = x - point
    return FWResult(active, x, 0.5 * float(r @ r), gap, it, converged)


def project_polytope(oracle, point, tol=1e-13, max_iters=None, init=None, return_result=False):
    """Euclidean projection onto a polytope (Wolfe's min-norm-point algorithm).

    ``gap`` in the result is the Frank-Wolfe certificate
    ``<x - point, x - s>`` for the returned ``x``.
    """
    res = min_norm_point(oracle, point, tol=tol, max_iters=max_iters, init=init)
    if not res.converged and res.gap > DEFAULT_TOL:
        raise NumericError(f"projection did not converge (gap {res.gap:.3g})", gap=res.gap)
    return res if return_result else res.x
