"""Projected online gradient descent with non-increasing learning rates.

Three step-size policies are provided: the constant ``alpha / M``, the
AdaGrad-type ``D / sqrt(2 sum |G_s|^2)`` and the Polyak-style rate
``min(2 (L - E[loss]) / |G|^2, eta_prev)``. A policy returns ``None`` when the
round must not update the iterate.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decode import expected_target_loss, sample
from .errors import DomainError, InvariantViolation, NumericError
from .loss_decomp import target_loss
from .polytopes import project_ball
from .surrogate import ConvFY


def lr_constant(alpha, M):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"surrogate gap alpha must lie in (0, 1), got {alpha}")
    if not M > 0:
        raise DomainError(f"self-bounding constant must be positive, got {M}")
    return alpha / M


def lr_adagrad(D, cum_grad_sq):
    """``D / sqrt(2 * cum_grad_sq)``; ``cum_grad_sq`` already includes this round."""
    if cum_grad_sq <= 0.0:
        return None
    return D / math.sqrt(2.0 * cum_grad_sq)


def lr_polyak(surrogate_value, expected_target, grad_norm_sq, eta_prev, floor=None, strict=False):
    """Polyak-style rate ``min(2 (L - E) / |G|^2, eta_prev)``.

    Returns ``None`` (no update) when ``|G| = 0`` or when the numerator is
    zero. With ``strict`` the rate is clamped below by ``floor``, which keeps
    it inside the range the target-loss bounds need.
    """
    excess = surrogate_value - expected_target
    if excess < -1e-6:
        raise InvariantViolation(
            f"surrogate loss {surrogate_value:.6g} below expected target loss {expected_target:.6g}")
    if grad_norm_sq <= 0.0:
        return None
    excess = max(excess, 0.0)
    eta = min(2.0 * excess / grad_norm_sq, eta_prev)
    if strict:
        if floor is None:
            raise DomainError("bound-strict Polyak rate needs a floor")
        eta = max(eta, floor)
    if eta <= 0.0:
        return None
    return eta


@dataclass
class LrPolicy:
    """Learning-rate rule.

    ``kind`` is ``"constant"``, ``"adagrad"`` or ``"polyak"``; ``mode`` is
    ``"empirical"`` (the Polyak rule verbatim) or ``"bound-strict"`` (clamped
    below by ``floor``).
    """

    kind: str
    alpha: Optional[float] = None
    M: Optional[float] = None
    D: Optional[float] = None
    floor: Optional[float] = None
    mode: str = "empirical"

    def __post_init__(self):
        if self.kind not in ("constant", "adagrad", "polyak"):
            raise DomainError(f"unknown learning-rate policy {self.kind!r}")
        if self.mode not in ("empirical", "bound-strict"):
            raise DomainError(f"unknown Polyak mode {self.mode!r}")
        if self.kind == "constant":
            lr_constant(self.alpha, self.M)
        if self.kind == "adagrad" and not (self.D and self.D > 0):
            raise DomainError("AdaGrad policy needs the domain diameter D")

    def rate(self, state, surrogate_value, expected_target, grad_norm_sq):
        if self.kind == "constant":
            return lr_constant(self.alpha, self.M)
        if self.kind == "adagrad":
            return lr_adagrad(self.D, state.cum_grad_sq)
        return lr_polyak(surrogate_value, expected_target, grad_norm_sq, state.eta_prev,
                         floor=self.floor, strict=self.mode == "bound-strict")


@dataclass
class LearnerState:
    W: np.ndarray
    radius: float
    eta_prev: float = math.inf
    cum_grad_sq: float = 0.0
    t: int = 0


def step(state: LearnerState, G, eta):
    """``W <- proj_ball(W - eta G)``; ``eta=None`` leaves ``W`` as is."""
    G = np.asarray(G, dtype=float)
    if not np.all(np.isfinite(G)):
        raise NumericError("non-finite gradient")
    if eta is not None:
        if not eta > 0:
            raise DomainError(f"learning rate must be positive, got {eta}")
        state.W = project_ball(state.W - eta * G, state.radius)
        state.eta_prev = eta
    state.t += 1
    return state


def dynamic_regret_bound(D, eta_T, etas, grad_sq_seq, P_T):
    """``(D / eta_T)(D/2 + P_T) + sum_t eta_t |G_t|^2 / 2``."""
    etas = np.asarray(etas, dtype=float)
    if np.any(np.diff(etas) > 0):
        raise DomainError("learning rates must be non-increasing")
    return D / eta_T * (D / 2.0 + P_T) + 0.5 * float(np.dot(etas, grad_sq_seq))


def theorem_bound(F_T, P_T, D, ratio):
    """``F_T + ratio * D * (D/2 + P_T)``; ``ratio`` is ``M / alpha`` or ``1 / lam``."""
    return F_T + ratio * D * (D / 2.0 + P_T)


@dataclass
class RoundRecord:
    t: int
    target: float
    expected_target: float
    surrogate: float
    eta: float
    grad_sq: float
    cum_target: float = 0.0
    cum_expected: float = 0.0
    cum_surrogate: float = 0.0


@dataclass
class OGDLearner:
    """Online learner: score with ``W x``, decode, sample, then take an OGD step.

    ``decoder(theta)`` returns a :class:`~nsosp.decode.SparseDistribution`;
    with a :class:`~nsosp.surrogate.ConvFY` loss the decoder is called as
    ``decoder(theta, inner=solution)`` so the inner problem is solved once.
    """

    loss: object
    decoder: object
    policy: LrPolicy
    D: float
    n_features: int
    state: LearnerState = None
    zero_excess_rounds: int = 0
    _totals: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self):
        if self.state is None:
            self.state = LearnerState(np.zeros((self.loss.score_dim, self.n_features)), self.D / 2.0)

    def round(self, x, y, rng) -> RoundRecord:
        loss = self.loss
        x = np.asarray(x, dtype=float)
        theta = self.state.W @ x
        if isinstance(loss, ConvFY):
            inner = loss.inner(theta)
            dist = self.decoder(theta, inner=inner)
            value = loss.value(theta, y, inner=inner)
            g = loss.grad(theta, y, inner=inner)
        else:
            dist = self.decoder(theta)
            value = loss.value(theta, y)
            g = loss.grad(theta, y)
        yhat = sample(dist, rng)
        decomp = loss.decomp
        target = target_loss(decomp, yhat, y)
        expected = expected_target_loss(dist, decomp, y)
        grad_sq = float(g @ g) * float(x @ x)
        self.state.cum_grad_sq += grad_sq
        try:
            eta = self.policy.rate(self.state, value, expected, grad_sq)
        except InvariantViolation as err:
            err.round_index = self.state.t + 1
            raise
        if eta is None and grad_sq > 0:
            self.zero_excess_rounds += self.policy.kind == "polyak"
        step(self.state, np.outer(g, x), eta)
        tot = self._totals
        tot[0] += target
        tot[1] += expected
        tot[2] += value
        return RoundRecord(self.state.t, target, expected, value,
                           eta if eta is not None else self.state.eta_prev, grad_sq,
                           tot[0], tot[1], tot[2])
