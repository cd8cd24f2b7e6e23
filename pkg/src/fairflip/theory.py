"""Executable verification of the supporting theory.

Four result families are checked here, each against an exact or Monte-Carlo
computation:

* a lower bound on the collective's success under label error and classifier
  suboptimality, verified by exact enumeration on finite causal models;
* the equivalence between perfect success and one-sided counterfactual
  fairness of the trained Bayes classifier, verified exactly;
* the spurious-direction behaviour of a budgeted max-margin learner on the
  4-Gaussian mixture when the minority is tiny, for any relabeling of the
  minority rows;
* closed forms for the asymptotic nearest-neighbour label-transfer error and
  the class-gap-erasing projection that improves it.

Everything is a pure function of its inputs and explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import TabularDataset
from .generators import (
    CausalModelSpec,
    DiscreteDistribution,
    GaussianPairParams,
    Gmm4Params,
    enumerate_causal,
    erasure_map,
    sample_gaussian_pair,
    sample_gmm4,
)
from .metrics import check_one_sided_cf_fairness, equalized_odds, estimate_tau
from .models import KnnIndex, knn_label, predict, train_linear_svm

__all__ = [
    "BoundInputs",
    "success_lower_bound",
    "verify_success_bound",
    "verify_cf_equivalence",
    "spurious_direction_experiment",
    "RELABELING_POLICIES",
    "normal_cdf",
    "asymptotic_1nn_error",
    "empirical_1nn_error",
    "fair_projection",
    "SnrReport",
    "snr_report",
]


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the C library's erf (absolute error < 1e-12)."""
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the success lower bound: participation alpha, probability
    label_error that a collectively assigned label is wrong, classifier
    suboptimality (total-variation budget), and the mean conditional shift
    tau induced by the feature map."""

    alpha: float
    label_error: float
    suboptimality: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.label_error < 0.5:
            raise ValueError("label_error must be in [0, 0.5)")
        if not 0.0 <= self.suboptimality < 1.0:
            raise ValueError("suboptimality must be in [0, 1)")
        if self.tau < 0.0:
            raise ValueError("tau must be nonnegative")


def success_lower_bound(b: BoundInputs) -> float:
    """Guaranteed success of the collective, exactly as derived; may be
    negative (display code clamps, this function never does)."""
    denom = (1.0 - 2.0 * b.label_error) * b.alpha
    bound = 1.0 - 2.0 * (1.0 - b.alpha) * b.tau / denom
    if b.suboptimality > 0.0:
        bound -= b.suboptimality / ((1.0 - b.suboptimality) * denom)
    return bound


def _argmax_label(p0: float, p1: float) -> int:
    return 1 if p1 >= p0 else 0


def _train_conditionals(
    dist: DiscreteDistribution, g: dict, alpha: float, label_error: float
) -> dict:
    """Label conditionals of the training mixture when an alpha fraction of
    every atom relabels to the best label of its image under g, getting it
    wrong with probability label_error."""
    out = {}
    for x in dist.support():
        base = dist.p_y_given_x(x)
        target = dist.p_y_given_x(g[x])
        y_plus = _argmax_label(target[0], target[1])
        coll = np.zeros(2)
        coll[y_plus] = 1.0 - label_error
        coll[1 - y_plus] = label_error
        out[x] = (1.0 - alpha) * base + alpha * coll
    return out


def verify_success_bound(
    spec: CausalModelSpec,
    alphas,
    label_errors,
    g: dict | None = None,
) -> dict:
    """Exact check of the success bound on one enumerated model.

    For every (alpha, label_error) grid point the training mixture is built
    in closed form, the exact Bayes classifier is read off, and the realized
    success is compared to the bound. Returns the margin table; a negative
    margin (beyond 1e-9 float guard) counts as a violation.
    """
    dist = enumerate_causal(spec)
    if g is None:
        g = erasure_map(spec)
    tau = estimate_tau(dist, g)
    support = dist.support()
    p_x = {x: dist.p_x(x) for x in support}
    rows = []
    for alpha in alphas:
        for label_error in label_errors:
            cond = _train_conditionals(dist, g, alpha, label_error)
            f = {x: _argmax_label(cond[x][0], cond[x][1]) for x in support}
            s = sum(p_x[x] for x in support if f[x] == f[g[x]])
            bound = success_lower_bound(BoundInputs(alpha, label_error, 0.0, tau))
            rows.append(
                {
                    "alpha": float(alpha),
                    "label_error": float(label_error),
                    "tau": tau,
                    "success": float(s),
                    "bound": bound,
                    "margin": float(s) - bound,
                }
            )
    margins = [r["margin"] for r in rows]
    return {
        "rows": rows,
        "min_margin": min(margins),
        "violations": sum(1 for m in margins if m < -1e-9),
    }


def _mixture_with_erasure(
    spec: CausalModelSpec, alpha: float
) -> tuple[DiscreteDistribution, dict]:
    """Training mixture when an alpha share of the data comes from minority
    members presenting their group-erased features with their own labels."""
    base = enumerate_causal(spec)
    g = erasure_map(spec)
    if spec.beta == 0.0:
        return base, g  # no minority, no collective
    xs = list(base.xs)
    ys = list(base.ys)
    attrs = list(base.attrs)
    probs = list((1.0 - alpha) * base.probs)
    for u, pu in spec.u_support:
        x1 = spec.feature_map[(1, u)]
        x0 = spec.feature_map[(0, u)]
        q1 = float(spec.label_table[x1])
        for y, py in ((1, q1), (0, 1.0 - q1)):
            xs.append(x0)
            ys.append(y)
            attrs.append(1)
            probs.append(alpha * pu * py)
    return DiscreteDistribution(tuple(xs), tuple(ys), tuple(attrs), np.array(probs)), g


def verify_cf_equivalence(spec: CausalModelSpec, alpha: float) -> dict:
    """Exact check that perfect success and one-sided counterfactual fairness
    coincide for the Bayes classifier of the erasure mixture, together with
    the minority-share decomposition of the success.

    Requires alpha in (0, 1): at alpha = 1 the original minority atoms can
    lose all training mass and the Bayes rule there is no longer defined.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    mix, g = _mixture_with_erasure(spec, alpha)
    cond = {x: mix.p_y_given_x(x) for x in mix.support()}

    def h(x) -> int:
        q = cond[x]
        return _argmax_label(q[0], q[1])

    beta = spec.beta
    if beta == 0.0:
        s_minority = 1.0  # no minority members: vacuously perfect
    else:
        s_minority = sum(
            pu
            for u, pu in spec.u_support
            if pu > 0 and h(spec.feature_map[(1, u)]) == h(spec.feature_map[(0, u)])
        )
    # Direct member-by-member success vs. the closed-form decomposition.
    s_direct = 0.0
    for a, pa in ((0, 1.0 - beta), (1, beta)):
        if pa == 0.0:
            continue
        for u, pu in spec.u_support:
            if pu == 0.0:
                continue
            x = spec.feature_map[(a, u)]
            gx = x if a == 0 else g[x]
            s_direct += pa * pu * (1.0 if h(x) == h(gx) else 0.0)
    s_decomposed = 1.0 - beta * (1.0 - s_minority)
    predicate = check_one_sided_cf_fairness(mix, g)
    success_is_one = s_direct > 1.0 - 1e-12
    return {
        "alpha": float(alpha),
        "beta": float(beta),
        "success": float(s_direct),
        "success_minority": float(s_minority),
        "decomposition_error": abs(s_direct - s_decomposed),
        "cf_fair": bool(predicate),
        "equivalence_ok": success_is_one == predicate,
    }


# ---------------------------------------------------------------------------
# Spurious direction of the budgeted max-margin learner
# ---------------------------------------------------------------------------

RELABELING_POLICIES = ("none", "flip_all", "random", "adversarial")


def _angle_degrees(w: np.ndarray, target: np.ndarray) -> float:
    c = float(w @ target) / (np.linalg.norm(w) * np.linalg.norm(target))
    return math.degrees(math.acos(min(1.0, abs(c))))


def _relabelings(policy: str, minority: np.ndarray, seed: int, n_search: int):
    """Yield arrays of minority indices whose labels get flipped."""
    if policy == "none":
        yield np.empty(0, dtype=np.int64)
    elif policy == "flip_all":
        yield minority
    elif policy == "random":
        rng = np.random.default_rng([seed, 3])
        yield minority[rng.random(minority.size) < 0.5]
    elif policy == "adversarial":
        rng = np.random.default_rng([seed, 4])
        for _ in range(n_search):
            yield minority[rng.random(minority.size) < 0.5]
    else:
        raise ValueError(f"unknown relabeling policy {policy!r}")


def spurious_direction_experiment(
    params: Gmm4Params,
    policy: str = "none",
    seed: int = 0,
    epochs: int = 300,
    n_eval: int = 4000,
    n_search: int = 64,
) -> dict:
    """Train the max-margin learner on a mixture sample after relabeling the
    minority rows per ``policy`` and report the angle to the group-aligned
    diagonal mu+psi together with the odds gap on a fresh balanced sample.

    ``adversarial`` searches ``n_search`` seeded random relabelings for the
    one maximising the angle. The epoch budget is deliberately fixed and
    modest; the learner's path is dominated by the majority throughout it,
    which is the behaviour under test.
    """
    data = sample_gmm4(params, seed)
    minority = data.minority_indices()
    target = params.mu + params.psi
    best = None
    for flips in _relabelings(policy, minority, seed, n_search):
        labels = data.labels.copy()
        labels[flips] = 1 - labels[flips]
        model = train_linear_svm(data.with_labels(labels), epochs=epochs)
        angle = _angle_degrees(model.w, target)
        if best is None or angle > best[0]:
            best = (angle, model)
    angle, model = best
    eval_params = Gmm4Params(
        params.mu, params.psi, n_eval, n_eval, params.noise, params.label_balance
    )
    eval_data = sample_gmm4(eval_params, np.random.default_rng([seed, 5]).integers(2**32))
    eqod = equalized_odds(
        predict(model, eval_data.features), eval_data.labels, eval_data.attribute
    )
    return {"policy": policy, "angle_deg": float(angle), "eqod": float(eqod)}


# ---------------------------------------------------------------------------
# Nearest-neighbour label transfer: closed forms and the projection
# ---------------------------------------------------------------------------


def asymptotic_1nn_error(g: GaussianPairParams) -> float:
    """Large-reference-set 1NN error for minority points labeled from the
    majority classes: 1 - Phi(v.mu_min / sqrt(v S_min v)) with v = S^-1 mu.

    The closed form is the strong-signal limit: it treats the denser class as
    winning the nearest-neighbour race outright, which is accurate once the
    class densities are well separated at the test points' scale.
    """
    try:
        v = np.linalg.solve(g.sigma, g.mu)
    except np.linalg.LinAlgError:
        raise ValueError("sigma is singular") from None
    snr = float(v @ g.mu_min) / math.sqrt(float(v @ g.sigma_min @ v))
    return 1.0 - normal_cdf(snr)


def empirical_1nn_error(
    g: GaussianPairParams,
    n_ref: int = 20000,
    n_queries: int = 20000,
    seed: int = 0,
    projection: np.ndarray | None = None,
) -> float:
    """Monte-Carlo 1NN error: label ``n_queries`` minority draws from
    ``n_ref`` majority references, optionally after projecting both."""
    data = sample_gaussian_pair(g, n_ref, n_queries, seed)
    refs = data.features[:n_ref]
    queries = data.features[n_ref:]
    if projection is not None:
        refs = refs @ projection.T
        queries = queries @ projection.T
    index = KnnIndex(refs, data.labels[:n_ref], k=1)
    labels, _ = knn_label(index, queries)
    return float(np.mean(labels != data.labels[n_ref:]))


def fair_projection(mu: np.ndarray, mu_min: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the hyperplane perpendicular to the
    between-group class-mean gap w = (mu - mu_min)/2; identity when the gap
    vanishes."""
    mu = np.asarray(mu, dtype=float)
    mu_min = np.asarray(mu_min, dtype=float)
    if mu.shape != mu_min.shape or mu.ndim != 1:
        raise ValueError("mu and mu_min must be vectors of equal length")
    w = 0.5 * (mu - mu_min)
    norm2 = float(w @ w)
    if norm2 < 1e-18:
        return np.eye(mu.shape[0])
    return np.eye(mu.shape[0]) - np.outer(w, w) / norm2


@dataclass(frozen=True)
class SnrReport:
    """Raw and projected signal-to-noise ratios with predicted 1NN errors.

    ``snr_proj`` follows the projected-identity chain (valid when sigma_min
    is the identity; ``identity_minority_cov`` flags whether that regime
    holds). The projection always satisfies P = P^T = P^2 and P w = 0.
    """

    v: np.ndarray
    snr_raw: float
    snr_proj: float
    projection: np.ndarray
    predicted_error_raw: float
    predicted_error_proj: float
    identity_minority_cov: bool


def snr_report(g: GaussianPairParams) -> SnrReport:
    v = np.linalg.solve(g.sigma, g.mu)
    snr_raw = float(v @ g.mu_min) / math.sqrt(float(v @ g.sigma_min @ v))
    P = fair_projection(g.mu, g.mu_min)
    mu_bar = P @ g.mu
    v_bar = np.linalg.solve(g.sigma, mu_bar)
    norm_v_bar = float(np.linalg.norm(v_bar))
    if norm_v_bar < 1e-15:
        snr_proj = 0.0
    else:
        snr_proj = float(mu_bar @ v_bar) / norm_v_bar
    return SnrReport(
        v=v,
        snr_raw=snr_raw,
        snr_proj=snr_proj,
        projection=P,
        predicted_error_raw=1.0 - normal_cdf(snr_raw),
        predicted_error_proj=1.0 - normal_cdf(snr_proj),
        identity_minority_cov=bool(np.allclose(g.sigma_min, np.eye(g.dim), atol=1e-12)),
    )
