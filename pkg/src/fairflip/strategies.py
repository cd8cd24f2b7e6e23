"""The collective's flip planners and a firm-side post-processing baseline.

A planner looks at the training data through the collective's eyes: it may
use every minority row, but only the seeded ``knowledge_fraction`` slice of
the majority. It returns a FlipPlan (ordered index/new-label pairs) that
apply_plan turns into a relabeled copy of the dataset. Ranked planners
(by_probability, by_distance) order candidates by model confidence so the
flip set at a smaller budget is always a prefix of the flip set at a larger
one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import TabularDataset
from .gbt import train_gbt
from .models import KnnIndex, knn_label, predict, predict_proba

__all__ = [
    "FlipPlan",
    "StrategyConfig",
    "eligible_set",
    "plan_random",
    "plan_by_probability",
    "plan_by_distance",
    "plan_by_label",
    "plan",
    "apply_plan",
    "PostProcessedClassifier",
    "postprocess_equalized_odds",
]

STRATEGY_KINDS = ("random", "by_label", "by_distance", "by_probability")


@dataclass(frozen=True)
class FlipPlan:
    """Ordered relabeling proposal: (row index, new label) pairs."""

    entries: tuple[tuple[int, int], ...]
    strategy: str
    budget_requested: int
    budget_used: int

    def __post_init__(self):
        if self.budget_used != len(self.entries):
            raise ValueError("budget_used must equal the number of entries")
        if self.budget_used > self.budget_requested:
            raise ValueError("budget_used cannot exceed budget_requested")
        idx = [i for i, _ in self.entries]
        if len(set(idx)) != len(idx):
            raise ValueError("plan indices must be unique")

    def indices(self) -> np.ndarray:
        return np.array([i for i, _ in self.entries], dtype=np.int64)

    def new_labels(self) -> np.ndarray:
        return np.array([v for _, v in self.entries], dtype=np.int64)

    def validate_against(self, data: TabularDataset):
        for i, new in self.entries:
            if not 0 <= i < data.n:
                raise ValueError(f"plan index {i} out of bounds for n={data.n}")
            if data.attribute[i] != 1:
                raise ValueError(f"plan targets non-minority row {i}")
            if new not in (0, 1):
                raise ValueError(f"plan label for row {i} must be 0/1, got {new}")
            if new == data.labels[i]:
                raise ValueError(f"plan does not change the label of row {i}")

    def to_csv(self) -> str:
        lines = ["index,new_label"]
        lines.extend(f"{i},{v}" for i, v in self.entries)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "strategy": self.strategy,
                "budget_requested": self.budget_requested,
                "budget_used": self.budget_used,
                "entries": [[int(i), int(v)] for i, v in self.entries],
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class StrategyConfig:
    """Knobs shared by all planners.

    ``alpha`` is the participating fraction of the minority; ``budget`` caps
    the number of flips actually applied; ``knowledge_fraction`` is the share
    of majority rows the collective can see. ``representation`` applies before
    distance computations in by_distance: None (raw features), "pca",
    "fair_projection", or an explicit projection matrix.
    """

    kind: str
    alpha: float = 0.3
    budget: int = 10**9
    knowledge_fraction: float = 1.0
    k_neighbors: int = 1
    representation: object = None
    pca_components: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; pick one of {STRATEGY_KINDS}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if not 0.0 < self.knowledge_fraction <= 1.0:
            raise ValueError("knowledge_fraction must be in (0, 1]")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def eligible_set(data: TabularDataset, alpha: float, seed: int) -> np.ndarray:
    """Seeded sample of ceil(alpha * n_minority) minority indices; flips may
    only target this set."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    minority = data.minority_indices()
    if minority.size == 0:
        raise ValueError("dataset has no minority rows")
    k = int(np.ceil(alpha * minority.size))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(minority, size=k, replace=False)
    return np.sort(chosen)


def _visible_majority(data: TabularDataset, cfg: StrategyConfig) -> np.ndarray:
    """Indices of the majority rows the collective is allowed to read."""
    majority = data.majority_indices()
    if cfg.knowledge_fraction >= 1.0:
        return majority
    k = max(1, int(round(cfg.knowledge_fraction * majority.size)))
    rng = np.random.default_rng([cfg.seed, 2])
    return np.sort(rng.choice(majority, size=k, replace=False))


def _ranked_prefix(
    candidates: np.ndarray, confidence: np.ndarray, budget: int
) -> np.ndarray:
    """Order candidates by confidence descending (ties: lower index) and take
    the budget prefix. The ordering makes flip sets prefix-monotone in the
    budget."""
    order = np.lexsort((candidates, -confidence))
    return candidates[order][:budget]


def plan_random(data: TabularDataset, cfg: StrategyConfig) -> FlipPlan:
    """Uniform seeded flips inside the eligible set."""
    elig = eligible_set(data, cfg.alpha, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    take = min(cfg.budget, elig.size)
    chosen = rng.choice(elig, size=take, replace=False) if take else np.empty(0, np.int64)
    entries = tuple((int(i), int(1 - data.labels[i])) for i in chosen)
    return FlipPlan(entries, "random", cfg.budget, len(entries))


def plan_by_probability(data: TabularDataset, cfg: StrategyConfig) -> FlipPlan:
    """Relabel toward a majority-trained probability model.

    A boosted-trees model is fitted on the visible majority rows only; the
    candidates are eligible rows whose current label disagrees with the
    model's most probable label, ranked by that label's probability
    (most confident disagreement first).
    """
    elig = eligible_set(data, cfg.alpha, cfg.seed)
    visible = _visible_majority(data, cfg)
    vis_data = data.take(visible)
    if len(np.unique(vis_data.labels)) < 2:
        raise ValueError("visible majority contains a single class")
    surrogate = train_gbt(vis_data, seed=cfg.seed)
    proba1 = predict_proba(surrogate, data.features[elig])
    model_label = (proba1 >= 0.5).astype(np.int64)
    confidence = np.where(model_label == 1, proba1, 1.0 - proba1)
    disagree = model_label != data.labels[elig]
    chosen = _ranked_prefix(elig[disagree], confidence[disagree], cfg.budget)
    label_of = dict(zip(elig.tolist(), model_label.tolist()))
    entries = tuple((int(i), int(label_of[int(i)])) for i in chosen)
    return FlipPlan(entries, "by_probability", cfg.budget, len(entries))


def _representation_matrix(
    data: TabularDataset, cfg: StrategyConfig, visible: np.ndarray, elig: np.ndarray
) -> np.ndarray | None:
    rep = cfg.representation
    if rep is None or (isinstance(rep, str) and rep == "raw"):
        return None
    if isinstance(rep, np.ndarray):
        return np.asarray(rep, dtype=float)
    if rep == "pca":
        from .pca import pca_fit

        t = pca_fit(data.take(visible), cfg.pca_components)
        return t.components
    if rep == "fair_projection":
        from .theory import fair_projection

        vis = data.take(visible)
        mu = _half_class_gap(vis.features, vis.labels)
        own = data.take(elig)
        mu_min = _half_class_gap(own.features, own.labels)
        return fair_projection(mu, mu_min)
    raise ValueError(f"unknown representation {rep!r}")


def _half_class_gap(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    pos = features[labels == 1]
    neg = features[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both classes to estimate the class-mean gap")
    return 0.5 * (pos.mean(axis=0) - neg.mean(axis=0))


def plan_by_distance(data: TabularDataset, cfg: StrategyConfig) -> FlipPlan:
    """Relabel toward the k-NN vote of the visible majority, optionally in a
    transformed representation (PCA or the class-gap-erasing projection)."""
    elig = eligible_set(data, cfg.alpha, cfg.seed)
    visible = _visible_majority(data, cfg)
    if cfg.k_neighbors > visible.size:
        raise ValueError(
            f"k_neighbors={cfg.k_neighbors} exceeds visible majority size {visible.size}"
        )
    P = _representation_matrix(data, cfg, visible, elig)
    ref = data.features[visible]
    queries = data.features[elig]
    if P is not None:
        ref = ref @ P.T
        queries = queries @ P.T
    index = KnnIndex(ref, data.labels[visible], cfg.k_neighbors)
    knn_labels, confidence = knn_label(index, queries)
    disagree = knn_labels != data.labels[elig]
    chosen = _ranked_prefix(elig[disagree], confidence[disagree], cfg.budget)
    label_of = dict(zip(elig.tolist(), knn_labels.tolist()))
    entries = tuple((int(i), int(label_of[int(i)])) for i in chosen)
    return FlipPlan(entries, "by_distance", cfg.budget, len(entries))


def plan_by_label(data: TabularDataset, cfg: StrategyConfig) -> FlipPlan:
    """Flip the over-represented minority label toward the majority's mix.

    Rule (declared by this artifact): the disadvantaged direction is the sign
    of (minority positive rate - visible majority positive rate); eligible
    rows holding the over-represented label are flipped uniformly at random
    up to the budget. A tie flips 0 -> 1.
    """
    elig = eligible_set(data, cfg.alpha, cfg.seed)
    visible = _visible_majority(data, cfg)
    minority_rate = float(data.labels[data.minority_indices()].mean())
    majority_rate = float(data.labels[visible].mean())
    over_label = 1 if minority_rate > majority_rate else 0
    holders = elig[data.labels[elig] == over_label]
    rng = np.random.default_rng([cfg.seed, 1])
    take = min(cfg.budget, holders.size)
    chosen = rng.choice(holders, size=take, replace=False) if take else np.empty(0, np.int64)
    entries = tuple((int(i), int(1 - over_label)) for i in chosen)
    return FlipPlan(entries, "by_label", cfg.budget, len(entries))


_PLANNERS = {
    "random": plan_random,
    "by_probability": plan_by_probability,
    "by_distance": plan_by_distance,
    "by_label": plan_by_label,
}


def plan(data: TabularDataset, cfg: StrategyConfig) -> FlipPlan:
    """Dispatch to the planner named by ``cfg.kind``."""
    return _PLANNERS[cfg.kind](data, cfg)


def apply_plan(data: TabularDataset, flip_plan: FlipPlan) -> TabularDataset:
    """Return a copy of ``data`` with the planned labels substituted.

    Features and the attribute are untouched; the input dataset is immutable
    and remains as it was.
    """
    flip_plan.validate_against(data)
    labels = data.labels.copy()
    for i, new in flip_plan.entries:
        labels[i] = new
    return data.with_labels(labels)


# ---------------------------------------------------------------------------
# Firm-side baseline: randomized group-wise odds equalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PostProcessedClassifier:
    """Group-aware post-processing of a base model.

    For group a, a base prediction of 1 is kept with probability ``keep1[a]``
    and a base prediction of 0 is raised with probability ``raise0[a]``. At
    prediction time the randomization is stratified per (group, base
    prediction): within each stratum exactly round(p * n) rows flip, chosen
    by the stored seed, so realized rates track the calibrated targets.
    """

    base_model: object
    raise0: tuple[float, float]
    keep1: tuple[float, float]
    target_fpr: float
    target_tpr: float
    seed: int

    def predict(self, X: np.ndarray, attribute: np.ndarray) -> np.ndarray:
        base = predict(self.base_model, X)
        attr = np.asarray(attribute)
        out = np.zeros(len(base), dtype=np.int64)
        rng = np.random.default_rng(self.seed)
        for a in (0, 1):
            for b in (0, 1):
                stratum = np.flatnonzero((attr == a) & (base == b))
                if stratum.size == 0:
                    continue
                p_one = self.keep1[a] if b == 1 else self.raise0[a]
                n_one = int(round(p_one * stratum.size))
                ones = rng.choice(stratum, size=n_one, replace=False)
                out[ones] = 1
        return out


def _mixing_for_target(
    tpr: float, fpr: float, t_star: float, f_star: float
) -> tuple[float, float] | None:
    """Solve for (raise0, keep1) placing group rates at (t*, f*); None if the
    target is outside the group's achievable quadrilateral."""
    det = tpr - fpr
    if abs(det) < 1e-9:
        if abs(t_star - f_star) > 1e-9:
            return None
        p = t_star
        return (p, p) if 0.0 <= p <= 1.0 else None
    keep1 = ((1.0 - fpr) * t_star - (1.0 - tpr) * f_star) / det
    raise0 = (tpr * f_star - fpr * t_star) / det
    eps = 1e-9
    if -eps <= keep1 <= 1.0 + eps and -eps <= raise0 <= 1.0 + eps:
        return (min(max(raise0, 0.0), 1.0), min(max(keep1, 0.0), 1.0))
    return None


def postprocess_equalized_odds(
    model, validation: TabularDataset, seed: int = 0, grid: int = 200
) -> PostProcessedClassifier:
    """Calibrate group-wise randomized flips so both groups share a common
    (FPR, TPR) operating point, minimizing error over the feasible points.

    The candidate points are a uniform grid over [0,1]^2 plus each group's
    own base operating point and its complement (so a base model that is
    already fair calibrates to the identity exactly).
    """
    y = validation.labels
    attr = validation.attribute
    base = predict(model, validation.features)
    rates = {}
    for a in (0, 1):
        for z in (1, 0):
            cell = (attr == a) & (y == z)
            if not np.any(cell):
                raise ValueError(f"validation cell (a={a}, y={z}) is empty")
        rates[a] = (
            float(base[(attr == a) & (y == 1)].mean()),  # TPR
            float(base[(attr == a) & (y == 0)].mean()),  # FPR
        )

    n = validation.n
    cls_weight = {
        (a, z): int(((attr == a) & (y == z)).sum()) / n for a in (0, 1) for z in (0, 1)
    }

    ticks = np.linspace(0.0, 1.0, grid + 1)
    candidates = [(f, t) for t in ticks for f in ticks]
    for a in (0, 1):
        tpr, fpr = rates[a]
        candidates.append((fpr, tpr))
        candidates.append((1.0 - fpr, 1.0 - tpr))

    best = None
    for f_star, t_star in candidates:
        mix = [_mixing_for_target(*rates[a], t_star, f_star) for a in (0, 1)]
        if mix[0] is None or mix[1] is None:
            continue
        err = sum(
            cls_weight[(a, 1)] * (1.0 - t_star) + cls_weight[(a, 0)] * f_star
            for a in (0, 1)
        )
        key = (err, f_star, -t_star)
        if best is None or key < best[0]:
            best = (key, f_star, t_star, mix)
    assert best is not None  # (0,0) is always feasible
    _, f_star, t_star, mix = best
    return PostProcessedClassifier(
        base_model=model,
        raise0=(mix[0][0], mix[1][0]),
        keep1=(mix[0][1], mix[1][1]),
        target_fpr=f_star,
        target_tpr=t_star,
        seed=seed,
    )
