"""Synthetic online environments and comparator sequences.

Environments are generated eagerly from ``(config, seed)``: inputs ``X``
(``T x p``, every row of norm at most one) and label handles ``Y``. Binary
environments use handle 0 for label ``+1`` and handle 1 for ``-1``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

REFERENCE_U = np.array([1.0, 1.0]) / math.sqrt(2.0)


@dataclass
class Environment:
    kind: str
    T: int
    seed: int
    X: np.ndarray
    Y: np.ndarray
    segment: np.ndarray
    params: dict = field(default_factory=dict)

    def __iter__(self):
        return zip(self.X, (int(y) for y in self.Y))

    def __len__(self):
        return self.T

    @property
    def signs(self):
        """Binary labels as ``+1 / -1``."""
        return 1 - 2 * self.Y

    @property
    def n_features(self):
        return self.X.shape[1]


def sign_to_label(s):
    return (1 - np.asarray(s, dtype=int)) // 2


def segment_starts(T, n_switches):
    """Evenly spaced segment boundaries: ``n_switches + 1`` segments over ``T`` rounds."""
    return [k * T // (n_switches + 1) for k in range(1, n_switches + 1)]


def segment_index(T, n_switches):
    seg = np.zeros(T, dtype=int)
    for b in segment_starts(T, n_switches):
        seg[b:] += 1
    return seg


def _unit_circle(rng, n, accept=None):
    """Angles uniform on ``[0, 2 pi)``; rejected points are redrawn."""
    angles = rng.uniform(0.0, 2.0 * math.pi, size=n)
    X = np.column_stack([np.cos(angles), np.sin(angles)])
    if accept is not None:
        bad = ~accept(X)
        while bad.any():
            a = rng.uniform(0.0, 2.0 * math.pi, size=int(bad.sum()))
            X[bad] = np.column_stack([np.cos(a), np.sin(a)])
            bad = ~accept(X)
    return X


def gen_flip_binary(T, flips, seed, margin=0.0):
    """Halfspace labels ``sign <u, x>`` negated after each of ``flips`` evenly spaced points.

    ``x`` is uniform on the unit circle; ties ``<u, x> = 0`` count as ``+1``.
    ``margin > 0`` redraws inputs with ``|<u, x>| < margin`` so that the
    segments are separable with a margin.
    """
    if T <= 0:
        raise DomainError(f"horizon must be positive, got {T}")
    if flips < 0 or flips >= T:
        raise DomainError(f"need 0 <= flips < T, got flips={flips}, T={T}")
    if not 0.0 <= margin < 1.0:
        raise DomainError(f"margin must lie in [0, 1), got {margin}")
    rng = np.random.default_rng(seed)
    accept = (lambda X: np.abs(X @ REFERENCE_U) >= margin) if margin > 0 else None
    X = _unit_circle(rng, T, accept)
    base = np.where(X @ REFERENCE_U >= 0.0, 1, -1)
    seg = segment_index(T, flips)
    signs = base * np.where(seg % 2 == 0, 1, -1)
    return Environment("flip-binary", T, seed, X, sign_to_label(signs), seg,
                       {"flips": flips, "u": REFERENCE_U.copy(), "margin": margin})


def gen_lower_bound(T, seed):
    """``x_t = (1, 0)`` with labels ``+1 / -1`` drawn uniformly."""
    if T <= 0 or T % 2:
        raise DomainError(f"lower-bound instance needs a positive even T, got {T}")
    rng = np.random.default_rng(seed)
    X = np.tile([1.0, 0.0], (T, 1))
    Y = rng.integers(0, 2, size=T)
    return Environment("lower-bound", T, seed, X, Y, np.zeros(T, dtype=int))


def gen_segmented_multiclass(T, K, segments, seed, margin=0.5):
    """K-class data on the unit circle, separable within each of ``segments`` pieces.

    Each segment rotates ``K`` evenly spread class prototypes by a random
    angle; ``y = argmax <p_j, x>`` and inputs whose top-two gap is below
    ``margin`` are redrawn.
    """
    if K < 2 or segments < 1 or T < segments:
        raise DomainError("need K >= 2, segments >= 1 and T >= segments")
    rng = np.random.default_rng(seed)
    seg = segment_index(T, segments - 1)
    protos = []
    for _ in range(segments):
        phi = rng.uniform(0.0, 2.0 * math.pi)
        a = phi + 2.0 * math.pi * np.arange(K) / K
        protos.append(np.column_stack([np.cos(a), np.sin(a)]))
    protos = np.array(protos)

    def top_gap(X):
        S = np.einsum("tkp,tp->tk", protos[seg], X)
        S.sort(axis=1)
        return S[:, -1] - S[:, -2]

    X = _unit_circle(rng, T)
    bad = top_gap(X) < margin
    while bad.any():
        a = rng.uniform(0.0, 2.0 * math.pi, size=int(bad.sum()))
        X[bad] = np.column_stack([np.cos(a), np.sin(a)])
        bad = top_gap(X) < margin
    Y = np.argmax(np.einsum("tkp,tp->tk", protos[seg], X), axis=1)
    return Environment("segmented-separable", T, seed, X, Y, seg,
                       {"K": K, "segments": segments, "margin": margin, "prototypes": protos})


def gen_ranking(T, d, k, seed, p=3, drift=0.0, segments=1):
    """Synthetic label ranking: grades from a drifting linear model of unit-sphere inputs.

    Per segment, a random ``d x p`` matrix ``A`` with unit rows rotates
    towards a second one at angular speed ``drift`` per round; grade ``i`` is
    ``<A_i, x>`` in ``[-1, 1]`` bucketed into ``{1..k}``.
    """
    if d > 6:
        raise DomainError("ranking environments keep d <= 6 so permutations stay enumerable")
    if k < 1 or segments < 1 or T < segments:
        raise DomainError("need k >= 1, segments >= 1 and T >= segments")
    rng = np.random.default_rng(seed)
    seg = segment_index(T, segments - 1)

    def unit_rows(n):
        A = rng.normal(size=(n, d, p))
        return A / np.linalg.norm(A, axis=2, keepdims=True)

    A0, A1 = unit_rows(segments), unit_rows(segments)
    X = rng.normal(size=(T, p))
    X /= np.linalg.norm(X, axis=1, keepdims=True)

    starts = np.concatenate([[0], segment_starts(T, segments - 1)])
    age = np.arange(T) - starts[seg]
    ang = drift * age
    A = np.cos(ang)[:, None, None] * A0[seg] + np.sin(ang)[:, None, None] * A1[seg]
    A /= np.linalg.norm(A, axis=2, keepdims=True)
    S = np.einsum("tdp,tp->td", A, X)
    grades = 1 + np.minimum(k - 1, np.floor(k * (S + 1.0) / 2.0).astype(int))
    Y = (grades - 1) @ (k ** np.arange(d))
    return Environment("ranking-synthetic", T, seed, X, Y, seg,
                       {"d": d, "k": k, "p": p, "drift": drift, "segments": segments,
                        "A0": A0, "A1": A1})


# ---------------------------------------------------------------------------
# comparators


@dataclass
class ComparatorSequence:
    """Piecewise-constant ``U_1..U_T`` stored as ``(start_round, U)`` pieces."""

    T: int
    pieces: list

    @classmethod
    def constant(cls, T, U):
        return cls(T, [(0, np.asarray(U, dtype=float))])

    @classmethod
    def from_list(cls, Us):
        pieces = []
        for t, U in enumerate(Us):
            U = np.asarray(U, dtype=float)
            if not pieces or not np.array_equal(pieces[-1][1], U):
                pieces.append((t, U))
        return cls(len(Us), pieces)

    def at(self, t):
        starts = [s for s, _ in self.pieces]
        return self.pieces[int(np.searchsorted(starts, t, side="right")) - 1][1]

    def __iter__(self):
        for i, (s, U) in enumerate(self.pieces):
            end = self.pieces[i + 1][0] if i + 1 < len(self.pieces) else self.T
            for _ in range(s, end):
                yield U

    def path_length(self, lo=0, hi=None):
        """``sum_t |U_t - U_{t-1}|_F`` over ``lo < t < hi`` (the whole sequence by default)."""
        hi = self.T if hi is None else hi
        return float(sum(np.linalg.norm(b[1] - a[1]) for a, b in zip(self.pieces, self.pieces[1:])
                         if lo < b[0] < hi))

    def max_norm(self):
        return max(float(np.linalg.norm(U)) for _, U in self.pieces)



def comparator_losses(seq: ComparatorSequence, env: Environment, loss):
    """Per-round comparator losses ``L(U_t x_t, y_t)``."""
    if seq.T != env.T:
        raise DomainError(f"comparator horizon {seq.T} differs from environment horizon {env.T}")
    return np.array([loss.value(U @ x, int(y)) for U, x, y in zip(seq, env.X, env.Y)])


def cumulative_loss(seq: ComparatorSequence, env: Environment, loss):
    """``F_T = sum_t L(U_t x_t, y_t)``."""
    return float(comparator_losses(seq, env, loss).sum())


def _check_radius(seq, D):
    if D is not None and seq.max_norm() > D / 2.0 + 1e-12:
        raise DomainError(f"comparator norm {seq.max_norm():.4g} exceeds the domain radius {D / 2}")
    return seq


def comparators_tracking(env: Environment, scale, D=None, form="multiclass"):
    """``U_t = +/- scale * R`` following the sign of the active flip segment.

    ``form="multiclass"`` gives ``R = [u/2; -u/2]`` so the K=2 margin
    ``theta_y - theta_other`` equals ``scale * <u, x> * y``; ``form="binary"``
    gives the 1 x 2 weight vector ``R = u``.
    """
    if env.kind != "flip-binary":
        raise DomainError("tracking comparators need a flip-binary environment")
    u = env.params["u"]
    R = np.vstack([u / 2.0, -u / 2.0]) if form == "multiclass" else u[None, :]
    pieces = [(0, scale * R)] + [(b, scale * R * (-1) ** (k + 1))
                                 for k, b in enumerate(segment_starts(env.T, env.params["flips"]))]
    return _check_radius(ComparatorSequence(env.T, pieces), D)


def comparators_lower_bound(env: Environment, case):
    """Case ``"i"`` follows every label (zero loss); case ``"ii"`` is fixed."""
    if case == "i":
        Us = [0.5 * np.array([[y, 1.0], [-y, 1.0]]) for y in env.signs]
        return ComparatorSequence.from_list(Us)
    if case == "ii":
        return ComparatorSequence.constant(env.T, 0.5 * np.array([[1.0, 1.0], [-1.0, 1.0]]))
    raise DomainError(f"unknown comparator case {case!r}")


def comparators_piecewise(env: Environment, scale, D=None):
    """One comparator per segment of a segmented multiclass or ranking environment.

    Multiclass: ``scale * prototypes``. Ranking: ``-scale * A`` at the segment
    start, aligning scores with ``rho(y)``, which is minus the normalised grades.
    """
    starts = [0] + segment_starts(env.T, int(env.segment.max()))
    if env.kind == "segmented-separable":
        mats = [scale * P for P in env.params["prototypes"]]
    elif env.kind == "ranking-synthetic":
        mats = [-scale * A for A in env.params["A0"]]
    else:
        raise DomainError(f"no piecewise comparators for {env.kind}")
    return _check_radius(ComparatorSequence(env.T, list(zip(starts, mats))), D)


def comparators_best_fixed(env: Environment, loss, D, epochs=2, seed=0):
    """A single comparator (``P_T = 0``) from averaged projected subgradient descent."""
    from .surrogate import gradient_W
    from .polytopes import project_ball

    rng = np.random.default_rng(seed)
    U = np.zeros((loss.score_dim, env.n_features))
    avg = np.zeros_like(U)
    n = 0
    for _ in range(epochs):
        for t in rng.permutation(env.T):
            n += 1
            G = gradient_W(loss, U, env.X[t], int(env.Y[t]))
            U = project_ball(U - D / (2.0 * math.sqrt(n)) * G, D / 2.0)
            avg += (U - avg) / n
    return ComparatorSequence.constant(env.T, avg)
