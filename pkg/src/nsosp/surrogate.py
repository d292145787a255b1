"""Surrogate losses on score vectors, with (sub)gradients and self-bounding constants.

All losses expose ``value(theta, y)``, ``grad(theta, y)`` and the attribute
``M`` (``None`` when the loss is not self-bounding). ``score_dim`` is the
length of ``theta``; labels are handles of ``decomp``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DomainError, NumericError
from .loss_decomp import LossDecomposition, Multiclass, tau
from .polytopes import (ActiveSet, PolytopeOracle, frank_wolfe_min, label_hull_oracle,
                        prediction_oracle, project_polytope, project_simplex)


class NotSelfBounding(DomainError):
    pass


# ---------------------------------------------------------------------------
# regularizers


class Regularizer:
    """Strongly convex ``Omega`` whose domain is a polytope.

    ``kind`` is ``"quadratic"`` (``lam/2 |mu|^2`` plus the indicator of the
    polytope) or ``"entropy"`` (negative Shannon entropy on the simplex,
    1-strongly convex in l2).
    """

    def __init__(self, kind, oracle: PolytopeOracle, lam=1.0, proj_tol=1e-13):
        if kind not in ("quadratic", "entropy"):
            raise DomainError(f"unknown regularizer kind {kind!r}")
        if not lam > 0:
            raise DomainError(f"strong convexity constant must be positive, got {lam}")
        if kind == "entropy" and oracle.kind != "simplex":
            raise DomainError("entropy regularizer lives on the simplex")
        self.kind = kind
        self.oracle = oracle
        self.lam = float(lam)
        self.proj_tol = proj_tol

    @classmethod
    def quadratic(cls, oracle, lam=1.0):
        return cls("quadratic", oracle, lam)

    @classmethod
    def entropy(cls, n):
        from .polytopes import simplex_oracle
        return cls("entropy", simplex_oracle(n), 1.0)

    def value(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.lam * float(mu @ mu)
        nz = mu[mu > 0]
        return float(nz @ np.log(nz))

    def argmax(self, theta, init: Optional[ActiveSet] = None):
        """``grad Omega*(theta)``; returns ``(mu, active_set_or_None)``."""
        if self.kind == "entropy":
            return softmax(theta), None
        target = np.asarray(theta, dtype=float) / self.lam
        if self.oracle.kind == "simplex":
            return project_simplex(target), None
        res = project_polytope(self.oracle, target, tol=self.proj_tol, init=init, return_result=True)
        return res.x, res.active

    def conjugate(self, theta, init=None):
        """``(Omega*(theta), grad Omega*(theta), active_set)``."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "entropy":
            return float(logsumexp(theta)), softmax(theta), None
        mu, active = self.argmax(theta, init)
        return float(theta @ mu) - 0.5 * self.lam * float(mu @ mu), mu, active


# ---------------------------------------------------------------------------
# losses


class SurrogateLoss:
    kind = "abstract"
    M: Optional[float] = None
    decomp: LossDecomposition
    score_dim: int

    def value(self, theta, y) -> float:
        raise NotImplementedError

    def grad(self, theta, y) -> np.ndarray:
        raise NotImplementedError

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.score_dim,):
            raise DomainError(f"{self.kind}: expected a {self.score_dim}-vector, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise NumericError(f"{self.kind}: non-finite score vector")
        return theta


def multiclass_margin(theta, y):
    """``(m, y_tilde, y_star)``: margin of ``y``, best rival, overall argmax (lowest index on ties)."""
    rivals = np.array(theta, dtype=float)
    rivals[y] = -np.inf
    y_tilde = int(np.argmax(rivals))
    return float(theta[y] - theta[y_tilde]), y_tilde, int(np.argmax(theta))


def smooth_hinge_of_margin(m):
    if m <= 0:
        return 1.0 - 2.0 * m
    return max(1.0 - m, 0.0) ** 2


class SmoothHinge(SurrogateLoss):
    """Multiclass smooth hinge on the Crammer-Singer margin; ``|g|^2 <= 8 L``."""

    kind = "smooth-hinge"
    M = 4.0

    def __init__(self, K):
        self.decomp = Multiclass(K)
        self.score_dim = self.decomp.dim

    def value(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        m, _, _ = multiclass_margin(theta, y)
        return smooth_hinge_of_margin(m)

    def grad(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        m, y_tilde, y_star = multiclass_margin(theta, y)
        g = np.zeros(self.score_dim)
        if y_star != y:
            scale = 2.0
        elif m < 1.0:
            scale = 2.0 * (1.0 - m)
        else:
            return g
        g[y_tilde] += scale
        g[y] -= scale
        return g


class Logistic(SurrogateLoss):
    """Multiclass logistic loss ``log_base(sum exp theta) - theta_y / ln(base)``.

    It is the Fenchel-Young loss of the negative entropy; ``M = 1 / ln(base)``.
    """

    kind = "logistic"

    def __init__(self, K, base=math.e):
        if base <= 1:
            raise DomainError(f"log base must exceed 1, got {base}")
        self.decomp = Multiclass(K)
        self.score_dim = self.decomp.dim
        self.base = base
        self._scale = 1.0 / math.log(base)
        self.M = self._scale

    def value(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        return self._scale * float(logsumexp(theta) - theta[y])

    def grad(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        g = softmax(theta)
        g[y] -= 1.0
        return self._scale * g


class BinaryLogistic(SurrogateLoss):
    """``log_base(1 + exp(-s * theta))`` on a scalar score.

    Label handle 0 stands for ``s = +1`` and handle 1 for ``s = -1``; this is
    the linear-classifier form with a weight vector instead of a matrix.
    """

    kind = "binary-logistic"
    score_dim = 1

    def __init__(self, base=2.0):
        if base <= 1:
            raise DomainError(f"log base must exceed 1, got {base}")
        self.decomp = Multiclass(2)
        self.base = base
        self._scale = 1.0 / math.log(base)
        self.M = self._scale

    def value(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        z = (1 - 2 * y) * theta[0]
        return self._scale * float(np.logaddexp(0.0, -z))

    def grad(self, theta, y):
        theta = self._check(theta)
        self.decomp.check_label(y)
        s = 1 - 2 * y
        z = s * theta[0]
        # sigmoid(-z), written to avoid overflow
        sig = math.exp(-np.logaddexp(0.0, z))
        return np.array([-s * sig * self._scale])


class FenchelYoung(SurrogateLoss):
    """``Omega*(theta) + Omega(rho(y)) - <theta, rho(y)>``; ``M = 1 / lam``."""

    kind = "fy"

    def __init__(self, decomp, regularizer: Regularizer):
        self.decomp = decomp
        self.reg = regularizer
        self.score_dim = decomp.dim
        self.M = 1.0 / regularizer.lam

    def value(self, theta, y):
        theta = self._check(theta)
        rho = self.decomp.rho(y)
        conj, _, _ = self.reg.conjugate(theta)
        return conj + self.reg.value(rho) - float(theta @ rho)

    def grad(self, theta, y):
        theta = self._check(theta)
        mu, _ = self.reg.argmax(theta)
        return mu - self.decomp.rho(y)

    def regularized_prediction(self, theta):
        return self.reg.argmax(self._check(theta))[0]


class SparseMAP(FenchelYoung):
    """Fenchel-Young loss of ``|mu|^2 / 2`` restricted to ``conv{rho(y)}``."""

    kind = "sparsemap"

    def __init__(self, decomp):
        super().__init__(decomp, Regularizer.quadratic(label_hull_oracle(decomp), 1.0))


@dataclass
class InnerSolution:
    """Minimiser of ``Omega*(theta + nu)`` over the loss-vector hull.

    ``active`` holds the prediction handles and weights (the decoding
    distribution); ``xi = theta + nu`` and ``mu = grad Omega*(xi)``.
    """

    theta: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    mu: np.ndarray
    conj: float
    gap: float
    active: ActiveSet
    converged: bool


def solve_inner(regularizer: Regularizer, pred_oracle: PolytopeOracle, theta, tol=1e-8,
                max_iters=5000, init=None) -> InnerSolution:
    """Minimise ``nu -> Omega*(theta + nu)`` over ``conv{ell_rho(yhat)}`` by pairwise FW.

    ``Omega*`` is ``1/lam``-smooth; inner projections warm-start from the
    previous call within this solve.
    """
    theta = np.asarray(theta, dtype=float)
    warm = [None]

    def objective(nu):
        val, mu, act = regularizer.conjugate(theta + nu, init=warm[0])
        warm[0] = act
        return val, mu

    res = frank_wolfe_min(pred_oracle, objective, tol=tol, max_iters=max_iters,
                          lipschitz=1.0 / regularizer.lam, init=init, reduce_dim=pred_oracle.dim)
    if not res.converged and res.gap > 10 * tol:
        raise NumericError(f"convolutional FY inner problem did not converge (gap {res.gap:.3g})",
                           gap=res.gap)
    xi = theta + res.x
    conj, mu, _ = regularizer.conjugate(xi, init=warm[0])
    return InnerSolution(theta, res.x, xi, mu, conj, res.gap, res.active, res.converged)


def solve_birkhoff(regularizer: Regularizer, theta, weights, tol=1e-8, max_iters=None):
    """Ranking inner problem in matrix form: ``min_{P in Birkhoff} Omega*(theta + P w)``.

    Frank-Wolfe over the Birkhoff polytope with the assignment LMO; the active
    set (permutation handles and weights) is Caratheodory-reduced to at most
    ``d^2 + 1`` permutations. Returns the :class:`~nsosp.polytopes.FWResult`.
    """
    from .polytopes import birkhoff_oracle

    theta = np.asarray(theta, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = len(w)
    if theta.shape != (d,):
        raise DomainError(f"theta must have length {d}")
    warm = [None]

    def objective(p):
        val, mu, act = regularizer.conjugate(theta + p.reshape(d, d) @ w, init=warm[0])
        warm[0] = act
        return val, np.outer(mu, w).ravel()

    def curvature(direction):
        # the objective sees P only through P w, and Omega* is (1/lam)-smooth
        dw = direction.reshape(d, d) @ w
        return float(dw @ dw) / regularizer.lam

    return frank_wolfe_min(birkhoff_oracle(d), objective, tol=tol, max_iters=max_iters,
                           lipschitz=float(w @ w) / regularizer.lam, reduce_dim=d * d,
                           curvature=curvature)


class ConvFY(SurrogateLoss):
    """Convolutional Fenchel-Young loss, the FY loss of ``Omega + tau``.

    The conjugate is evaluated as ``Omega*(theta + L pi(theta))`` where
    ``pi(theta)`` solves the inner problem, so loss, gradient and decoding all
    reuse one :class:`InnerSolution` (pass it as ``inner=``).
    """

    kind = "conv-fy"

    def __init__(self, decomp, lam=1.0, tol=1e-8, max_iters=5000, regularizer=None):
        self.decomp = decomp
        self.score_dim = decomp.dim
        self.reg = regularizer or Regularizer.quadratic(label_hull_oracle(decomp), lam)
        self.lam = self.reg.lam
        self.M = 1.0 / self.lam
        self.pred_oracle = prediction_oracle(decomp)
        self.tol = tol
        self.max_iters = max_iters

    def inner(self, theta, init=None) -> InnerSolution:
        theta = self._check(theta)
        return solve_inner(self.reg, self.pred_oracle, theta, self.tol, self.max_iters, init)

    def _solution(self, theta, inner):
        if inner is None:
            return self.inner(theta)
        return inner

    def value(self, theta, y, inner=None):
        theta = self._check(theta)
        sol = self._solution(theta, inner)
        rho = self.decomp.rho(y)
        return sol.conj + self.reg.value(rho) + tau(self.decomp, rho)[0] - float(theta @ rho)

    def grad(self, theta, y, inner=None):
        theta = self._check(theta)
        sol = self._solution(theta, inner)
        return sol.mu - self.decomp.rho(y)

    def fy_value_at(self, xi, y):
        """Plain FY loss ``L_Omega(xi, y)``, used to split the conv-FY loss."""
        rho = self.decomp.rho(y)
        conj, _, _ = self.reg.conjugate(xi)
        return conj + self.reg.value(rho) - float(np.dot(xi, rho))


class PlainHinge(SurrogateLoss):
    """Multiclass hinge with threshold ``kappa``; a counterexample, not a usable surrogate.

    ``kappa < 1`` makes it discontinuous in the margin; ``kappa = 1`` is the
    convex Crammer-Singer hinge, which is not self-bounding.
    """

    kind = "plain-hinge"
    M = None

    def __init__(self, K, kappa):
        if not 0.0 <= kappa <= 1.0:
            raise DomainError(f"kappa must lie in [0, 1], got {kappa}")
        self.decomp = Multiclass(K)
        self.score_dim = K
        self.kappa = kappa

    def _active(self, theta, y):
        m, y_tilde, y_star = multiclass_margin(theta, y)
        # m* equals m(y) whenever y* == y
        return (y_star != y or m <= self.kappa), m, y_tilde

    def value(self, theta, y):
        theta = self._check(theta)
        on, m, _ = self._active(theta, y)
        return max(1.0 - m, 0.0) if on else 0.0

    def grad(self, theta, y):
        theta = self._check(theta)
        on, _, y_tilde = self._active(theta, y)
        g = np.zeros(self.score_dim)
        if on:
            g[y_tilde] += 1.0
            g[y] -= 1.0
        return g


# ---------------------------------------------------------------------------
# functional interface


def loss_value(loss: SurrogateLoss, theta, y, **kw):
    return loss.value(theta, y, **kw)


def subgradient_theta(loss: SurrogateLoss, theta, y, **kw):
    return loss.grad(theta, y, **kw)


def gradient_W(loss: SurrogateLoss, W, x, y, **kw):
    """Subgradient of ``W -> L(W x, y)``, i.e. ``g x^T``."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.outer(loss.grad(W @ x, y, **kw), x)


def self_bounding_constant(loss: SurrogateLoss):
    if loss.M is None:
        raise NotSelfBounding(f"{loss.kind} is not self-bounding")
    return loss.M


def plain_hinge(kappa, theta, y):
    theta = np.asarray(theta, dtype=float)
    return PlainHinge(len(theta), kappa).value(theta, y)
