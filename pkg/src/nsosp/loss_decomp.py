"""Target losses in bilinear form ``loss(yhat, y) = <rho(y), ell_rho(yhat)> + c(y)``.

Labels and predictions are integer handles. Each decomposition carries the
codec that turns handles into structured objects (class index, bitmask,
grade vector, permutation), so label/prediction sets may be exponentially
large without ever being materialised.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import DomainError
from .polytopes import assignment_lmo

# Brute-force checks enumerate at most this many (label, prediction) pairs.
ENUMERATION_LIMIT = 10_000


@dataclass(frozen=True)
class AffineForm:
    """``loss(yhat, y) = <enc(yhat), V enc(y) + b> + c(y)`` with ``enc`` the label encoding."""

    encode: Callable[[int], np.ndarray]
    V: np.ndarray
    b: np.ndarray
    c: Callable[[int], float]

    def loss(self, yhat, y):
        return float(self.encode(yhat) @ (self.V @ self.encode(y) + self.b) + self.c(y))


class LossDecomposition:
    """Base class; subclasses fill in the encodings and the prediction oracle."""

    name = "generic"
    dim: int
    n_labels: int
    n_predictions: int
    affine: Optional[AffineForm] = None

    def rho(self, y) -> np.ndarray:
        raise NotImplementedError

    def ell_rho(self, yhat) -> np.ndarray:
        raise NotImplementedError

    def c(self, y) -> float:
        raise NotImplementedError

    def lmo(self, direction):
        """Return ``(ell_rho(yhat), yhat)`` minimising ``<direction, ell_rho(yhat)>``."""
        raise NotImplementedError

    def direct_loss(self, yhat, y) -> float:
        """Target loss from its textbook formula, bypassing the decomposition."""
        raise NotImplementedError

    def labels(self) -> Iterator[int]:
        return iter(range(self.n_labels))

    def predictions(self) -> Iterator[int]:
        return iter(range(self.n_predictions))

    @property
    def enumerable(self):
        return self.n_labels * self.n_predictions <= ENUMERATION_LIMIT

    def check_label(self, y):
        if not (isinstance(y, (int, np.integer)) and 0 <= y < self.n_labels):
            raise DomainError(f"{self.name}: invalid label handle {y!r}")

    def check_prediction(self, yhat):
        if not (isinstance(yhat, (int, np.integer)) and 0 <= yhat < self.n_predictions):
            raise DomainError(f"{self.name}: invalid prediction handle {yhat!r}")

    def loss_matrix(self):
        """Columns ``ell_rho(yhat)`` for all predictions (d x N); enumerable instances only."""
        return np.column_stack([self.ell_rho(p) for p in self.predictions()])


@dataclass(frozen=True)
class ProblemInstance:
    """A decomposition together with its affine-decomposability constants."""

    decomposition: LossDecomposition
    gamma: Optional[float] = None
    nu: Optional[float] = None
    norm: str = "l1"

    def __post_init__(self):
        for name in ("gamma", "nu"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive, got {v}")


def target_loss(decomp: LossDecomposition, yhat, y) -> float:
    decomp.check_prediction(yhat)
    decomp.check_label(y)
    return float(decomp.rho(y) @ decomp.ell_rho(yhat) + decomp.c(y))


def tau(decomp: LossDecomposition, mu):
    """Negative linearised Bayes risk ``-min_yhat <mu, ell_rho(yhat)>`` and its minimiser."""
    vertex, yhat = decomp.lmo(np.asarray(mu, dtype=float))
    return -float(np.dot(mu, vertex)), yhat


# ---------------------------------------------------------------------------
# multiclass, 0-1 loss


class Multiclass(LossDecomposition):
    name = "multiclass"

    def __init__(self, K):
        if K < 2:
            raise DomainError(f"multiclass needs K >= 2, got {K}")
        self.K = self.dim = self.n_labels = self.n_predictions = int(K)
        self._eye = np.eye(self.K)
        self.affine = AffineForm(
            encode=self.rho,
            V=np.ones((self.K, self.K)) - np.eye(self.K),
            b=np.zeros(self.K),
            c=self.c,
        )

    def rho(self, y):
        self.check_label(y)
        return self._eye[y]

    def ell_rho(self, yhat):
        self.check_prediction(yhat)
        return 1.0 - self._eye[yhat]

    def c(self, y):
        return 0.0

    def lmo(self, direction):
        # <g, 1 - e_j> = sum(g) - g_j; argmax takes the lowest index on ties
        j = int(np.argmax(direction))
        return 1.0 - self._eye[j], j

    def direct_loss(self, yhat, y):
        return float(yhat != y)


def make_multiclass(K) -> Multiclass:
    return Multiclass(K)


def multiclass_instance(K) -> ProblemInstance:
    # ||e_y - e_y'||_1 = 2 and E[loss] = 1/2 ||mean - e_y||_1
    return ProblemInstance(make_multiclass(K), gamma=0.5, nu=2.0, norm="l1")


# ---------------------------------------------------------------------------
# multilabel, Hamming loss


class Multilabel(LossDecomposition):
    """Hamming loss over ``d`` binary outcomes; handles are bitmasks.

    The score space has ``d + 1`` coordinates: the outcome bits plus a
    constant 1, which carries the ``|yhat| / d`` term of the Hamming loss
    that depends on the prediction alone. The affine form keeps the plain
    ``{0, 1}^d`` encoding.
    """

    name = "multilabel"
    MAX_ENUMERABLE_BITS = 20

    def __init__(self, d):
        if d < 1:
            raise DomainError(f"multilabel needs d >= 1, got {d}")
        self.d = int(d)
        self.dim = self.d + 1
        self.n_labels = self.n_predictions = 2 ** self.d
        self.affine = AffineForm(
            encode=self.bits,
            V=-(2.0 / self.d) * np.eye(self.d),
            b=np.full(self.d, 1.0 / self.d),
            c=self.c,
        )

    def bits(self, y):
        self.check_label(y)
        return np.array([(y >> i) & 1 for i in range(self.d)], dtype=float)

    def from_bits(self, bits):
        return int(sum(int(b) << i for i, b in enumerate(bits)))

    def rho(self, y):
        return np.append(self.bits(y), 1.0)

    def ell_rho(self, yhat):
        b = self.bits(yhat)
        return np.append(-2.0 * b / self.d, b.sum() / self.d)

    def c(self, y):
        return bin(int(y)).count("1") / self.d

    def lmo(self, direction):
        g = np.asarray(direction, dtype=float)
        coef = (g[-1] - 2.0 * g[:-1]) / self.d
        bits = (coef < 0).astype(float)
        yhat = self.from_bits(bits)
        return np.append(-2.0 * bits / self.d, bits.sum() / self.d), yhat

    def direct_loss(self, yhat, y):
        return float(np.mean(self.bits(yhat) != self.bits(y)))

    def labels(self):
        if self.d > self.MAX_ENUMERABLE_BITS:
            raise DomainError("multilabel labels are oracle-only beyond 20 bits")
        return super().labels()

    predictions = labels


def make_multilabel(d) -> Multilabel:
    return Multilabel(d)


def multilabel_instance(d) -> ProblemInstance:
    return ProblemInstance(make_multilabel(d), gamma=1.0 / d, nu=1.0, norm="l1")


# ---------------------------------------------------------------------------
# label ranking, NDCG loss


def permutation_rank(perm) -> int:
    """Lehmer-code rank of a permutation of ``range(n)`` (lexicographic order)."""
    n = len(perm)
    rank = 0
    remaining = sorted(perm)
    for i, p in enumerate(perm):
        j = remaining.index(p)
        rank += j * math.factorial(n - 1 - i)
        remaining.pop(j)
    return rank


def permutation_unrank(rank, n):
    remaining = list(range(n))
    perm = []
    for i in range(n):
        f = math.factorial(n - 1 - i)
        j, rank = divmod(rank, f)
        perm.append(remaining.pop(j))
    return tuple(perm)


class NDCG(LossDecomposition):
    """NDCG loss over ``d`` documents with grades in ``{1..k}``.

    Labels are grade vectors (handle = base-``k`` digits of ``grade - 1``);
    predictions are permutations, ``perm[i]`` being the position of document
    ``i``, so document ``i`` receives weight ``w[perm[i]]``.
    """

    name = "ndcg"

    def __init__(self, d, weights, k):
        w = np.asarray(weights, dtype=float)
        if w.shape != (d,):
            raise DomainError(f"need {d} weights, got shape {w.shape}")
        if np.any(w < 0):
            raise DomainError("NDCG weights must be nonnegative")
        if not np.any(w > 0):
            raise DomainError("at least one NDCG weight must be positive")
        if k < 1:
            raise DomainError(f"grade range k must be >= 1, got {k}")
        self.d = self.dim = int(d)
        self.k = int(k)
        self.w = w
        self._w_sorted = np.sort(w)[::-1]
        self.n_labels = self.k ** self.d
        self.n_predictions = math.factorial(self.d)

    def encode_label(self, grades) -> int:
        g = np.asarray(grades, dtype=int)
        if g.shape != (self.d,) or np.any(g < 1) or np.any(g > self.k):
            raise DomainError(f"grades must be {self.d} integers in [1, {self.k}]")
        return int(sum(int(gi - 1) * self.k ** i for i, gi in enumerate(g)))

    def grades(self, y) -> np.ndarray:
        self.check_label(y)
        out = np.empty(self.d)
        for i in range(self.d):
            y, r = divmod(y, self.k)
            out[i] = r + 1
        return out

    def encode_prediction(self, perm) -> int:
        if sorted(perm) != list(range(self.d)):
            raise DomainError(f"not a permutation of range({self.d}): {perm!r}")
        return permutation_rank(perm)

    def permutation(self, yhat):
        self.check_prediction(yhat)
        return permutation_unrank(int(yhat), self.d)

    def normalizer(self, grades) -> float:
        # rearrangement inequality: pair both sequences sorted descending
        return float(np.sort(np.asarray(grades, dtype=float))[::-1] @ self._w_sorted)

    def rho(self, y):
        g = self.grades(y)
        return -g / self.normalizer(g)

    def ell_rho(self, yhat):
        return self.w[list(self.permutation(yhat))]

    def c(self, y):
        return 1.0

    def lmo(self, direction):
        cost = np.outer(np.asarray(direction, dtype=float), self.w)
        perm = assignment_lmo(cost)
        return self.w[list(perm)], permutation_rank(perm)

    def direct_loss(self, yhat, y):
        g = self.grades(y)
        return 1.0 - float(g @ self.w[list(self.permutation(yhat))]) / self.normalizer(g)

    def predictions(self):
        return (permutation_rank(p) for p in itertools.permutations(range(self.d)))


def make_ndcg(d, weights, k) -> NDCG:
    return NDCG(d, weights, k)


def ndcg_instance(d, weights, k) -> ProblemInstance:
    # prediction and label sets differ, so the affine constants do not apply
    return ProblemInstance(make_ndcg(d, weights, k))


def default_ndcg_weights(d):
    """Standard DCG discounts ``1 / log2(1 + position)``."""
    return 1.0 / np.log2(np.arange(2, d + 2))
