import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairflip.dataset import TabularDataset
from fairflip.generators import GaussianPairParams, Gmm4Params, sample_gaussian_pair, sample_gmm4
from fairflip.metrics import FairnessReport
from fairflip.models import LinearModel, predict
from fairflip.strategies import (
    FlipPlan,
    StrategyConfig,
    apply_plan,
    eligible_set,
    plan,
    plan_by_distance,
    plan_by_label,
    plan_by_probability,
    plan_random,
    postprocess_equalized_odds,
)
from fairflip.strategies import _visible_majority
from fairflip.theory import snr_report

MU = np.array([0.0, 1.0])
PSI = np.array([1.0, 0.0])


def mixed_dataset(seed=0, n_major=40, n_minor=20, noise=0.6):
    return sample_gmm4(Gmm4Params(MU, PSI, n_major, n_minor, noise), seed)


# ---------------------------------------------------------------------------
# eligibility
# ---------------------------------------------------------------------------


def test_eligible_all_at_alpha_one():
    data = mixed_dataset()
    np.testing.assert_array_equal(eligible_set(data, 1.0, 0), data.minority_indices())


def test_eligible_ceiling_rule():
    data = mixed_dataset(n_minor=10)
    assert eligible_set(data, 0.01, 0).size == 1
    assert eligible_set(data, 0.55, 0).size == 6


def test_eligible_deterministic():
    data = mixed_dataset()
    np.testing.assert_array_equal(eligible_set(data, 0.4, 7), eligible_set(data, 0.4, 7))


def test_eligible_requires_minority():
    data = TabularDataset(np.zeros((4, 1)), [0, 1, 0, 1], [0, 0, 0, 0])
    with pytest.raises(ValueError):
        eligible_set(data, 0.5, 0)


# ---------------------------------------------------------------------------
# planner contracts (property-based)
# ---------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(["random", "by_label", "by_distance", "by_probability"]),
    budget=st.integers(min_value=0, max_value=40),
    alpha=st.floats(min_value=0.1, max_value=1.0),
    seed=st.integers(min_value=0, max_value=50),
)
def test_planners_return_valid_plans(kind, budget, alpha, seed):
    data = mixed_dataset(seed=seed % 5)
    cfg = StrategyConfig(kind=kind, alpha=alpha, budget=budget, seed=seed)
    p = plan(data, cfg)
    p.validate_against(data)  # raises on any invariant violation
    assert p.budget_used <= budget
    elig = set(eligible_set(data, alpha, seed).tolist())
    assert set(p.indices().tolist()) <= elig
    applied = apply_plan(data, p)
    assert np.sum(applied.labels != data.labels) == p.budget_used


def test_plan_random_budget_zero_and_cap():
    data = mixed_dataset()
    empty = plan_random(data, StrategyConfig("random", alpha=1.0, budget=0, seed=1))
    assert empty.budget_used == 0 and empty.entries == ()
    full = plan_random(data, StrategyConfig("random", alpha=1.0, budget=10**6, seed=1))
    assert full.budget_used == data.minority_indices().size


def test_plan_random_uniform_over_eligible():
    data = mixed_dataset(n_minor=4)
    counts = {int(i): 0 for i in data.minority_indices()}
    for seed in range(2000):
        p = plan_random(data, StrategyConfig("random", alpha=1.0, budget=1, seed=seed))
        counts[p.entries[0][0]] += 1
    for c in counts.values():
        assert abs(c - 500) < 70


# ---------------------------------------------------------------------------
# by_probability
# ---------------------------------------------------------------------------


def test_by_probability_empty_when_all_agree():
    # minority labels equal the majority model's extrapolation: y = sign(x0)
    rng = np.random.default_rng(0)
    maj = rng.normal(size=(60, 1)) * 2.0
    mino = rng.normal(size=(20, 1)) * 2.0
    X = np.vstack([maj, mino])
    y = (X[:, 0] > 0).astype(int)
    attr = np.array([0] * 60 + [1] * 20)
    data = TabularDataset(X, y, attr)
    p = plan_by_probability(data, StrategyConfig("by_probability", alpha=1.0, seed=0))
    assert p.budget_used == 0


def test_by_probability_ranks_by_confidence():
    # two disagreeing minority rows: one deep in the majority-negative region,
    # one near the boundary; budget 1 must take the deep (confident) one.
    maj_x = np.concatenate([np.linspace(1.0, 3.0, 30), np.linspace(-3.0, -1.0, 30)])
    maj_y = (maj_x > 0).astype(int)
    min_x = np.array([-2.8, -0.9])
    min_y = np.array([1, 1])  # both disagree with the majority rule
    X = np.concatenate([maj_x, min_x])[:, None]
    y = np.concatenate([maj_y, min_y])
    attr = np.array([0] * 60 + [1] * 2)
    data = TabularDataset(X, y, attr)
    p = plan_by_probability(data, StrategyConfig("by_probability", alpha=1.0, budget=1, seed=0))
    assert p.budget_used == 1
    assert p.entries[0] == (60, 0)  # the deep row flips to the model's label


def test_by_probability_single_class_majority_errors():
    X = np.array([[1.0], [2.0], [0.5], [-1.0]])
    data = TabularDataset(X, [1, 1, 1, 0], [0, 0, 0, 1])
    with pytest.raises(ValueError, match="single class"):
        plan_by_probability(data, StrategyConfig("by_probability", alpha=1.0, seed=0))


def test_by_probability_unbounded_matches_model_labels():
    data = mixed_dataset(seed=3, n_major=200, n_minor=40)
    cfg = StrategyConfig("by_probability", alpha=1.0, budget=10**9, seed=5)
    p = plan_by_probability(data, cfg)
    flipped = apply_plan(data, p)
    from fairflip.gbt import train_gbt

    surrogate = train_gbt(data.take(data.majority_indices()), seed=5)
    want = predict(surrogate, data.features[data.minority_indices()])
    np.testing.assert_array_equal(flipped.labels[data.minority_indices()], want)


# ---------------------------------------------------------------------------
# by_distance
# ---------------------------------------------------------------------------


def test_by_distance_flips_to_nearest_majority_label():
    X = np.array([[-10.0], [10.0], [9.0]])
    data = TabularDataset(X, [0, 1, 0], [0, 0, 1])
    cfg = StrategyConfig("by_distance", alpha=1.0, budget=5, k_neighbors=1, seed=0)
    p = plan_by_distance(data, cfg)
    assert p.entries == ((2, 1),)


def test_by_distance_identity_projection_matches_raw():
    data = mixed_dataset(seed=4)
    raw_cfg = StrategyConfig("by_distance", alpha=1.0, budget=8, k_neighbors=3, seed=9)
    id_cfg = StrategyConfig(
        "by_distance", alpha=1.0, budget=8, k_neighbors=3, seed=9,
        representation=np.eye(2),
    )
    assert plan_by_distance(data, raw_cfg).entries == plan_by_distance(data, id_cfg).entries


def test_by_distance_k_exceeds_visible_majority():
    data = mixed_dataset(n_major=5)
    with pytest.raises(ValueError, match="k_neighbors"):
        plan_by_distance(data, StrategyConfig("by_distance", alpha=1.0, k_neighbors=9, seed=0))


def test_by_distance_projection_reduces_wrong_labels():
    # geometry with negative raw alignment: raw 1NN labels are mostly wrong,
    # the gap-erasing projection fixes them
    g = GaussianPairParams(
        np.array([3.0, 0.0]), np.eye(2), np.array([-1.2, 1.6]), np.eye(2)
    )
    rep = snr_report(g)
    assert rep.snr_raw < 0 < rep.snr_proj
    wrong_raw, wrong_proj = [], []
    for seed in range(10):
        data = sample_gaussian_pair(g, n_major=400, n_minor=60, seed=seed)
        for label, matrix in (("raw", None), ("proj", rep.projection)):
            cfg = StrategyConfig(
                "by_distance", alpha=1.0, budget=10**9, k_neighbors=1, seed=seed,
                representation=matrix,
            )
            p = plan_by_distance(data, cfg)
            flipped = apply_plan(data, p)
            mino = data.minority_indices()
            wrong = np.mean(flipped.labels[mino] != data.labels[mino])
            (wrong_raw if label == "raw" else wrong_proj).append(wrong)
    assert np.mean(wrong_proj) < np.mean(wrong_raw)


# ---------------------------------------------------------------------------
# by_label
# ---------------------------------------------------------------------------


def test_by_label_tie_flips_zero_to_one():
    X = np.zeros((8, 1))
    data = TabularDataset(X, [1, 1, 0, 0, 1, 0, 1, 0], [0, 0, 0, 0, 1, 1, 1, 1])
    p = plan_by_label(data, StrategyConfig("by_label", alpha=1.0, budget=1, seed=0))
    assert p.budget_used == 1
    assert p.entries[0][1] == 1  # flips a 0 to 1 on ties


def test_by_label_flips_overrepresented_zero():
    X = np.zeros((10, 1))
    # minority all 0, majority half positive -> flip 0 -> 1
    data = TabularDataset(X, [1, 1, 1, 0, 0, 0, 0, 0, 0, 0], [0] * 6 + [1] * 4)
    p = plan_by_label(data, StrategyConfig("by_label", alpha=1.0, budget=2, seed=1))
    assert p.budget_used == 2
    assert all(v == 1 for _, v in p.entries)


def test_by_label_plan_size_rule():
    rng = np.random.default_rng(0)
    for seed in range(10):
        data = mixed_dataset(seed=seed)
        cfg = StrategyConfig("by_label", alpha=0.7, budget=int(rng.integers(0, 15)), seed=seed)
        p = plan_by_label(data, cfg)
        elig = eligible_set(data, 0.7, seed)
        minority_rate = data.labels[data.minority_indices()].mean()
        majority_rate = data.labels[data.majority_indices()].mean()
        over = 1 if minority_rate > majority_rate else 0
        holders = int(np.sum(data.labels[elig] == over))
        assert p.budget_used == min(cfg.budget, holders)


# ---------------------------------------------------------------------------
# apply_plan and knowledge limits
# ---------------------------------------------------------------------------


def test_apply_plan_round_trip():
    data = mixed_dataset()
    p = plan_random(data, StrategyConfig("random", alpha=1.0, budget=7, seed=3))
    flipped = apply_plan(data, p)
    back = FlipPlan(
        tuple((i, int(data.labels[i])) for i, _ in p.entries),
        "undo", p.budget_requested, p.budget_used,
    )
    restored = apply_plan(flipped, back)
    np.testing.assert_array_equal(restored.labels, data.labels)
    np.testing.assert_array_equal(restored.features, data.features)
    assert apply_plan(data, FlipPlan((), "noop", 0, 0)).labels.tolist() == data.labels.tolist()


def test_apply_plan_never_touches_features():
    data = mixed_dataset()
    digest = data.features.tobytes()
    p = plan_random(data, StrategyConfig("random", alpha=1.0, budget=9, seed=2))
    flipped = apply_plan(data, p)
    assert flipped.features.tobytes() == digest


def test_apply_plan_validates():
    data = mixed_dataset()
    majority_row = int(data.majority_indices()[0])
    bad = FlipPlan(((majority_row, 1 - int(data.labels[majority_row])),), "x", 1, 1)
    with pytest.raises(ValueError, match="non-minority"):
        apply_plan(data, bad)
    some_minority = int(data.minority_indices()[0])
    same = FlipPlan(((some_minority, int(data.labels[some_minority])),), "x", 1, 1)
    with pytest.raises(ValueError, match="change"):
        apply_plan(data, same)


def test_planners_blind_to_hidden_majority():
    data = mixed_dataset(seed=6, n_major=60, n_minor=20)
    for kind in ("by_probability", "by_distance", "by_label"):
        cfg = StrategyConfig(kind, alpha=1.0, budget=6, knowledge_fraction=0.5, seed=11)
        visible = set(_visible_majority(data, cfg).tolist())
        hidden = [i for i in data.majority_indices().tolist() if i not in visible]
        baseline = plan(data, cfg)
        feats = data.features.copy()
        labels = data.labels.copy()
        feats[hidden] += 37.0
        labels[hidden] = 1 - labels[hidden]
        mutated = TabularDataset(feats, labels, data.attribute)
        assert plan(mutated, cfg).entries == baseline.entries


def test_ranked_planners_prefix_monotone():
    data = mixed_dataset(seed=8, n_major=120, n_minor=40)
    for kind in ("by_probability", "by_distance"):
        small = plan(data, StrategyConfig(kind, alpha=1.0, budget=4, seed=13))
        large = plan(data, StrategyConfig(kind, alpha=1.0, budget=11, seed=13))
        assert large.entries[: len(small.entries)] == small.entries


# ---------------------------------------------------------------------------
# equalized-odds post-processing
# ---------------------------------------------------------------------------


def balanced_groups_dataset(seed, n, minority_frac=0.3, majority_acc=2.0, minority_acc=2.0):
    rng = np.random.default_rng(seed)
    attr = (rng.random(n) < minority_frac).astype(int)
    y = (rng.random(n) < 0.5).astype(int)
    acc = np.where(attr == 1, minority_acc, majority_acc)
    x = (2.0 * y - 1.0) * acc + rng.normal(size=n)
    return TabularDataset(x[:, None], y, attr)


def test_postprocess_identity_when_already_fair():
    # both groups have exactly TPR 0.9, FPR 0.1 under sign(x)
    blocks = []
    for a in (0, 1):
        for y, x, count in ((1, 1.0, 90), (1, -1.0, 10), (0, -1.0, 90), (0, 1.0, 10)):
            blocks.extend([(x, y, a)] * count)
    xs, ys, attrs = map(np.array, zip(*blocks))
    val = TabularDataset(xs[:, None].astype(float), ys, attrs)
    model = LinearModel(np.array([1.0]), 0.0)
    post = postprocess_equalized_odds(model, val, seed=0)
    assert post.raise0 == (0.0, 0.0)
    assert post.keep1 == (1.0, 1.0)


def test_postprocess_majority_perfect_minority_random():
    rng = np.random.default_rng(9)
    n = 6000
    attr = (rng.random(n) < 0.3).astype(int)
    y = (rng.random(n) < 0.5).astype(int)
    x = np.where(attr == 0, (2.0 * y - 1.0) * 2.0 + 0.4 * rng.normal(size=n),
                 0.05 * rng.normal(size=n))
    val = TabularDataset(x[:, None], y, attr)
    model = LinearModel(np.array([1.0]), 0.0)
    base = FairnessReport.from_predictions(predict(model, val.features), val.labels, val.attribute)
    post = postprocess_equalized_odds(model, val, seed=0)
    rep = FairnessReport.from_predictions(
        post.predict(val.features, val.attribute), val.labels, val.attribute
    )
    assert rep.eqod < 0.05
    assert rep.error >= base.error


def test_postprocess_heldout_equalization():
    model = LinearModel(np.array([1.0]), 0.0)
    val = balanced_groups_dataset(1, 6000, majority_acc=2.0, minority_acc=0.7)
    heldout = balanced_groups_dataset(2, 6000, majority_acc=2.0, minority_acc=0.7)
    post = postprocess_equalized_odds(model, val, seed=3)
    rep = FairnessReport.from_predictions(
        post.predict(heldout.features, heldout.attribute), heldout.labels, heldout.attribute
    )
    assert rep.eqod <= 0.1


def test_postprocess_requires_all_cells():
    X = np.array([[1.0], [2.0], [-1.0], [-2.0]])
    val = TabularDataset(X, [1, 1, 0, 0], [1, 1, 0, 0])
    with pytest.raises(ValueError, match="cell"):
        postprocess_equalized_odds(LinearModel(np.array([1.0]), 0.0), val)
