"""Numerical invariant suites shared by the command line and the test-suite.

Each suite returns a :class:`SuiteResult` with a pass flag, the worst slack
observed (negative means violated) and a short detail string.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .decode import (SparseDistribution, argmax_decoder, binary_clip_decoder, binary_margin_grid,
                     expected_target_loss, gap_certificate)
from .loss_decomp import default_ndcg_weights, make_multiclass, make_ndcg
from .polytopes import assignment_lmo, label_hull_oracle
from .surrogate import (BinaryLogistic, ConvFY, Logistic, PlainHinge, Regularizer, SmoothHinge,
                        SparseMAP, solve_birkhoff)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst_slack: float
    detail: str = ""
    witness: object = None

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: worst slack {self.worst_slack:.3g}; {self.detail}"


def identity_families():
    """Instances for the conv-FY identities: multiclass ``K <= 5`` and NDCG ``d <= 4``."""
    fams = [(f"multiclass K={K}", make_multiclass(K)) for K in (2, 3, 5)]
    fams += [(f"ndcg d={d} k={k}", make_ndcg(d, default_ndcg_weights(d), k)) for d, k in ((3, 3), (4, 2))]
    return fams


def conv_fy_primal(decomp, lam, theta):
    """``max_{mu in conv rho(Y)} <theta, mu> - lam/2 |mu|^2 - tau(mu)`` by SLSQP.

    An independent route to the conjugate of ``Omega + tau``: ``mu = R beta``
    over the label simplex, and ``-tau(mu)`` enters as an epigraph variable
    ``t <= <mu, ell_rho(yhat)>`` for every prediction.
    """
    R = np.array([decomp.rho(y) for y in decomp.labels()]).T
    Lm = np.array([decomp.ell_rho(h) for h in decomp.predictions()])
    n = R.shape[1]

    def neg(z):
        beta, t = z[:n], z[n]
        mu = R @ beta
        val = theta @ mu - 0.5 * lam * mu @ mu + t
        grad = np.concatenate([R.T @ (theta - lam * mu), [1.0]])
        return -val, -grad

    cons = [
        {"type": "eq", "fun": lambda z: z[:n].sum() - 1.0,
         "jac": lambda z: np.concatenate([np.ones(n), [0.0]])},
        {"type": "ineq", "fun": lambda z: Lm @ (R @ z[:n]) - z[n],
         "jac": lambda z: np.hstack([Lm @ R, -np.ones((len(Lm), 1))])},
    ]
    z0 = np.concatenate([np.full(n, 1.0 / n), [float(np.min(Lm @ R.mean(axis=1)))]])
    res = minimize(neg, z0, jac=True, method="SLSQP", constraints=cons,
                   bounds=[(0.0, 1.0)] * n + [(None, None)], options={"ftol": 1e-14, "maxiter": 1000})
    return -float(res.fun)


def lemma1_suite(rng, n=100, lam=1.0, atol=1e-5):
    """``E_pi[loss] = L_conv(theta, y) - L_Omega(theta + L pi, y)`` and a primal cross-check."""
    worst, detail = 0.0, []
    for name, decomp in identity_families():
        loss = ConvFY(decomp, lam=lam)
        labels = list(decomp.labels())
        per = max(1, n // len(identity_families()))
        fam_worst = 0.0
        for _ in range(per):
            theta = rng.normal(scale=1.5, size=decomp.dim)
            y = labels[rng.integers(len(labels))]
            sol = loss.inner(theta)
            dist = SparseDistribution.from_active_set(sol.active)
            lhs = expected_target_loss(dist, decomp, y)
            total = loss.value(theta, y, inner=sol)
            rhs = total - loss.fy_value_at(sol.xi, y)
            rho = decomp.rho(y)
            primal = (conv_fy_primal(decomp, lam, theta) + loss.reg.value(rho)
                      + decomp.c(y) - float(theta @ rho))
            err = max(abs(lhs - rhs), abs(primal - total))
            fam_worst = max(fam_worst, err)
        worst = max(worst, fam_worst)
        detail.append(f"{name} max err {fam_worst:.2e}")
    return SuiteResult("conv-FY split identity", worst <= atol, atol - worst, "; ".join(detail))


def lemma2_suite(rng, n=100, lam=1.0, atol=1e-7):
    """``L_Omega(theta + L pi, y) >= lam/2 |grad|^2``; the two-class example at 0 is tight."""
    worst = math.inf
    for name, decomp in identity_families():
        loss = ConvFY(decomp, lam=lam)
        labels = list(decomp.labels())
        for _ in range(max(1, n // len(identity_families()))):
            theta = rng.normal(scale=1.5, size=decomp.dim)
            y = labels[rng.integers(len(labels))]
            sol = loss.inner(theta)
            g = loss.grad(theta, y, inner=sol)
            worst = min(worst, loss.fy_value_at(sol.xi, y) - 0.5 * lam * float(g @ g))
    k2 = ConvFY(make_multiclass(2), lam=lam)
    sol = k2.inner(np.zeros(2))
    g = k2.grad(np.zeros(2), 0, inner=sol)
    lhs, rhs = k2.fy_value_at(sol.xi, 0), 0.5 * lam * float(g @ g)
    tight = abs(lhs - 0.25) <= 1e-9 and abs(rhs - 0.25) <= 1e-9
    return SuiteResult("quadratic lower bound on the FY part", worst >= -atol and tight, worst,
                       f"K=2, theta=0: both sides {lhs:.6f} and {rhs:.6f}")


def self_bounding_losses():
    return [
        ("smooth hinge K=3", SmoothHinge(3)),
        ("smooth hinge K=5", SmoothHinge(5)),
        ("logistic (natural) K=3", Logistic(3)),
        ("logistic (base 2) binary", BinaryLogistic(2.0)),
        ("sparsemap K=3", SparseMAP(make_multiclass(3))),
    ]


def self_bounding_check(loss, rng, n=1000, M=None, scale=3.0):
    """Largest ``|G|_F^2 - 2 M L`` over random ``(theta, x, y)`` with ``|x| <= 1``.

    Returns ``(worst_excess, witness)`` where the witness is the sample that
    maximises the excess, as ``(theta, y, L, |G|^2)``.
    """
    M = loss.M if M is None else M
    labels = list(loss.decomp.labels())
    worst, witness = -math.inf, None
    for _ in range(n):
        theta = rng.normal(scale=scale, size=loss.score_dim)
        x = rng.normal(size=3)
        x *= rng.random() / np.linalg.norm(x)
        y = labels[rng.integers(len(labels))]
        L = loss.value(theta, y)
        G = np.outer(loss.grad(theta, y), x)
        gsq = float(np.sum(G * G))
        if gsq - 2.0 * M * L > worst:
            worst, witness = gsq - 2.0 * M * L, (theta, y, L, gsq)
    return worst, witness


def plain_hinge_witness(kappa=1.0, M=4.0):
    """Search margins just below one for ``|g|^2 > 2 M L``; the hinge has ``|g|^2 = 2`` there."""
    loss = PlainHinge(2, kappa)
    for eps in np.geomspace(0.5, 1e-6, 60):
        m = 1.0 - eps
        theta = np.array([m / 2.0, -m / 2.0])
        L = loss.value(theta, 0)
        g = loss.grad(theta, 0)
        gsq = float(g @ g)
        if L < 0.01 and gsq > 2.0 * M * L:
            return theta, 0, L, gsq
    return None


def self_bounding_suite(rng, n=1000, atol=1e-9):
    worst, parts = -math.inf, []
    for name, loss in self_bounding_losses():
        w, _ = self_bounding_check(loss, rng, n)
        worst = max(worst, w)
        parts.append(f"{name}: max excess {w:.2e}")
    witness = plain_hinge_witness()
    ok = worst <= atol and witness is not None
    if witness is not None:
        parts.append(f"plain hinge witness L={witness[2]:.2e}, |g|^2={witness[3]:g}")
    return SuiteResult("self-bounding", ok, -worst, "; ".join(parts), witness)


def binary_theta_grid(lo=-4.0, hi=4.0, step=0.05):
    return binary_margin_grid(lo, hi, step)


def gap_suite(alpha=0.5):
    """Clip decoders meet the gap ``alpha``; argmax (and ``alpha = 0.9``) do not."""
    hinge_grid = binary_theta_grid()
    logit_grid = [np.array([t[0] - t[1]]) for t in hinge_grid]
    sh, bl = SmoothHinge(2), BinaryLogistic(2.0)
    slope = 1.0 / (4.0 * math.log(2.0))
    reports = {
        "clip/smooth hinge": gap_certificate(binary_clip_decoder, sh, sh.decomp, alpha, hinge_grid),
        "clip/base-2 logistic": gap_certificate(lambda t: binary_clip_decoder(t, slope), bl, bl.decomp,
                                                alpha, logit_grid),
        "argmax/smooth hinge": gap_certificate(argmax_decoder, sh, sh.decomp, alpha, hinge_grid),
        "clip/smooth hinge alpha=0.9": gap_certificate(binary_clip_decoder, sh, sh.decomp, 0.9, hinge_grid),
    }
    expect = {"clip/smooth hinge": True, "clip/base-2 logistic": True,
              "argmax/smooth hinge": False, "clip/smooth hinge alpha=0.9": False}
    ok = all(reports[k].passed == v for k, v in expect.items())
    worst = min(reports["clip/smooth hinge"].worst_slack, reports["clip/base-2 logistic"].worst_slack)
    detail = "; ".join(f"{k}: {len(r.violations)} violations" for k, r in reports.items())
    return SuiteResult("surrogate gap certificates", ok, worst, detail, reports)


def assignment_suite(rng, n=100, dmax=5):
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, dmax + 1))
        C = rng.normal(size=(d, d))
        perm = assignment_lmo(C)
        best = min(sum(C[i, s[i]] for i in range(d)) for s in itertools.permutations(range(d)))
        worst = max(worst, sum(C[i, perm[i]] for i in range(d)) - best)
    return SuiteResult("assignment oracle vs enumeration", worst <= 1e-12, -worst, f"{n} matrices, d <= {dmax}")


def birkhoff_suite(rng, n=20, d=3, tol=1e-8):
    decomp = make_ndcg(d, default_ndcg_weights(d), 3)
    reg = Regularizer.quadratic(label_hull_oracle(decomp))
    worst_gap, worst_support = 0.0, 0
    for _ in range(n):
        theta = rng.normal(scale=2.0, size=d)
        w = rng.random(d) + 0.1
        res = solve_birkhoff(reg, theta, w, tol=tol)
        worst_gap = max(worst_gap, res.gap)
        worst_support = max(worst_support, len(res.active))
    ok = worst_gap <= tol and worst_support <= d * d + 1
    return SuiteResult("Frank-Wolfe on the Birkhoff polytope", ok, tol - worst_gap,
                       f"max gap {worst_gap:.2e}, max support {worst_support} (limit {d * d + 1})")


def prop1_instance(rng, T=50, n=4, D=2.0):
    """Random convex quadratics on a ball, a random comparator path and non-increasing rates.

    Returns ``(regret, bound)`` for projected OGD started at the origin.
    """
    from .ogd import dynamic_regret_bound
    from .polytopes import project_ball

    r = D / 2.0
    w = np.zeros(n)
    etas = np.sort(rng.uniform(0.01, 1.0, size=T))[::-1]
    U = [project_ball(rng.normal(size=n), r)]
    for _ in range(T - 1):
        U.append(U[-1] if rng.random() < 0.7 else project_ball(rng.normal(size=n), r))
    regret, gsq = 0.0, []
    for t in range(T):
        B = rng.normal(size=(n, n))
        A = B @ B.T / n
        c = rng.normal(size=n)

        def f(v):
            return 0.5 * (v - c) @ A @ (v - c)

        g = A @ (w - c)
        regret += f(w) - f(U[t])
        gsq.append(float(g @ g))
        w = project_ball(w - etas[t] * g, r)
    P = sum(float(np.linalg.norm(a - b)) for a, b in zip(U[1:], U[:-1]))
    return regret, dynamic_regret_bound(D, etas[-1], etas, gsq, P)


def prop1_suite(rng, n=50, atol=1e-6):
    worst = math.inf
    for _ in range(n):
        regret, bound = prop1_instance(rng)
        worst = min(worst, bound - regret)
    return SuiteResult("dynamic regret of OGD", worst >= -atol, worst, f"{n} random sequences")


@dataclass
class IdentityReport:
    suites: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s.passed for s in self.suites)


def verify_identities(seed=0):
    rng = np.random.default_rng(seed)
    return IdentityReport([
        lemma1_suite(rng),
        lemma2_suite(rng),
        self_bounding_suite(rng),
        gap_suite(),
        assignment_suite(rng),
        birkhoff_suite(rng),
        prop1_suite(rng),
    ])
