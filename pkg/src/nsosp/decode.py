"""Randomized decoders: score vector -> distribution over predictions."""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .loss_decomp import LossDecomposition, target_loss
from .polytopes import ActiveSet
from .surrogate import ConvFY, InnerSolution, Regularizer, solve_inner
from .polytopes import prediction_oracle


@dataclass(frozen=True)
class SparseDistribution:
    """Distribution over prediction handles with explicit, small support."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(p) != len(self.support) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"invalid distribution {p}")
        object.__setattr__(self, "probs", np.clip(p, 0.0, None))

    @classmethod
    def point_mass(cls, handle):
        return cls((handle,), np.ones(1))

    @classmethod
    def from_active_set(cls, active: ActiveSet):
        w = np.clip(np.asarray(active.weights, dtype=float), 0.0, None)
        keep = w > 0
        w = w[keep] / w[keep].sum()
        handles = tuple(h for h, k in zip(active.handles, keep) if k)
        return cls(handles, w)

    def __len__(self):
        return len(self.support)


def _binary_margin(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (2,):
        return float(theta[0] - theta[1])
    if theta.shape == (1,):
        return float(theta[0])
    raise DomainError(f"binary decoding needs a 2-vector (or scalar score), got shape {theta.shape}")


def binary_clip_decoder(theta, slope=1.0):
    """Predict class 0 with probability ``clip(1/2 + slope * m, 0, 1)``.

    ``m`` is ``theta[0] - theta[1]`` (or the scalar score). With ``slope = 1``
    this meets the surrogate gap ``alpha = 1/2`` for the smooth hinge; with
    ``slope = 1 / (4 ln 2)`` it does so for the base-2 logistic loss (the
    decoding error is the tangent line of the convex loss at ``m = 0``).
    """
    p = min(max(0.5 + slope * _binary_margin(theta), 0.0), 1.0)
    if p == 1.0:
        return SparseDistribution.point_mass(0)
    if p == 0.0:
        return SparseDistribution.point_mass(1)
    return SparseDistribution((0, 1), np.array([p, 1.0 - p]))


def argmax_decoder(theta):
    """Deterministic argmax (lowest index on ties); has no surrogate gap."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (1,):
        return SparseDistribution.point_mass(0 if theta[0] >= 0 else 1)
    return SparseDistribution.point_mass(int(np.argmax(theta)))


def convfy_decoder(regularizer: Regularizer, decomp: LossDecomposition, theta, tol=1e-8,
                   return_solution=False):
    """``pi(theta)`` minimising ``Omega*(theta + L pi)`` over the prediction simplex.

    Solved over the loss-vector hull and read off the Frank-Wolfe active set,
    which is Caratheodory-reduced to at most ``d + 1`` predictions.
    """
    sol = solve_inner(regularizer, prediction_oracle(decomp), theta, tol=tol)
    dist = SparseDistribution.from_active_set(sol.active)
    return (dist, sol) if return_solution else dist


def expected_target_loss(dist: SparseDistribution, decomp: LossDecomposition, y):
    return float(sum(p * target_loss(decomp, h, y) for h, p in zip(dist.support, dist.probs)))


def sample(dist: SparseDistribution, rng: np.random.Generator):
    """Inverse-CDF draw over the explicit support."""
    u = rng.random()
    cdf = np.cumsum(dist.probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return dist.support[min(i, len(dist.support) - 1)]


@dataclass
class GapReport:
    alpha: float
    checked: int
    worst_slack: float
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def gap_certificate(decoder: Callable, surrogate, decomp: LossDecomposition, alpha,
                    theta_grid: Sequence, atol=1e-9) -> GapReport:
    """Check ``E[loss] <= (1 - alpha) L(theta, y)`` for every grid point and label.

    ``worst_slack`` is the minimum of ``(1 - alpha) L - E[loss]``; violations
    are returned as ``(theta, y, expected, surrogate)`` tuples.
    """
    worst = np.inf
    violations = []
    n = 0
    for theta in theta_grid:
        theta = np.asarray(theta, dtype=float)
        dist = decoder(theta)
        for y in decomp.labels():
            e = expected_target_loss(dist, decomp, y)
            s = surrogate.value(theta, y)
            slack = (1.0 - alpha) * s - e
            worst = min(worst, slack)
            n += 1
            if slack < -atol:
                violations.append((theta, y, e, s))
    return GapReport(alpha, n, float(worst), violations)


def binary_margin_grid(lo=-2.0, hi=2.0, step=0.1):
    """Score vectors ``(m/2, -m/2)`` for margins on a regular grid."""
    ms = np.round(np.arange(lo, hi + step / 2, step), 10)
    return [np.array([m / 2.0, -m / 2.0]) for m in ms]


class ConvFYDecoder:
    """Decoder bound to a :class:`ConvFY` loss so the learner can share its inner solve."""

    def __init__(self, loss: ConvFY):
        self.loss = loss

    def solve(self, theta) -> InnerSolution:
        return self.loss.inner(theta)

    def __call__(self, theta, inner=None):
        sol = inner if inner is not None else self.solve(theta)
        return SparseDistribution.from_active_set(sol.active)
