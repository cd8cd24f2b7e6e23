import numpy as np
import pytest
from scipy.optimize import minimize

from fairflip.dataset import TabularDataset
from fairflip.gbt import GbtModel, train_gbt
from fairflip.generators import Gmm4Params, sample_gmm4
from fairflip.models import (
    DiscreteBayes,
    KnnIndex,
    LinearModel,
    bayes_classify,
    knn_label,
    logistic_loss_and_grad,
    model_from_json,
    model_to_json,
    predict,
    predict_proba,
    train_linear_svm,
    train_logreg,
)

MU = np.array([0.0, 1.0])
PSI = np.array([1.0, 0.0])


def flat(features, labels):
    features = np.asarray(features, dtype=float)
    return TabularDataset(features, labels, [0] * len(features))


def angle_deg(u, v):
    c = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return np.degrees(np.arccos(min(1.0, c)))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------


def test_logreg_separable_sign():
    model = train_logreg(flat([[-1.0], [1.0]], [0, 1]), epochs=500)
    assert model.w[0] > 0


def test_logreg_duplicate_rows_same_model():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] > 0).astype(int)
    base = train_logreg(flat(X, y), epochs=800)
    doubled = train_logreg(flat(np.vstack([X, X]), np.concatenate([y, y])), epochs=800)
    np.testing.assert_allclose(base.w, doubled.w, atol=1e-9)
    assert base.b == pytest.approx(doubled.b, abs=1e-9)


def test_logreg_reaches_stationarity():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 5))
    y = (X @ rng.normal(size=5) + 0.3 * rng.normal(size=200) > 0).astype(int)
    model = train_logreg(flat(X, y), l2=1e-4, epochs=30000)
    _, gw, gb = logistic_loss_and_grad(model.w, model.b, X, y.astype(float), 1e-4)
    assert float(np.sqrt(gw @ gw + gb * gb)) < 1e-4


def test_logreg_rejects_single_class():
    with pytest.raises(ValueError):
        train_logreg(flat([[0.0], [1.0]], [1, 1]))


def test_gradient_matches_central_differences():
    for i in range(20):
        rng = np.random.default_rng(100 + i)
        X = rng.normal(size=(30, 4))
        y = (rng.random(30) < 0.5).astype(float)
        w = rng.normal(size=4)
        b = float(rng.normal())
        _, gw, gb = logistic_loss_and_grad(w, b, X, y, 1e-3)
        analytic = np.concatenate([gw, [gb]])
        fd = np.zeros(5)
        eps = 1e-6
        for j in range(5):
            zp = np.concatenate([w, [b]])
            zm = zp.copy()
            zp[j] += eps
            zm[j] -= eps
            lp, _, _ = logistic_loss_and_grad(zp[:4], zp[4], X, y, 1e-3)
            lm, _, _ = logistic_loss_and_grad(zm[:4], zm[4], X, y, 1e-3)
            fd[j] = (lp - lm) / (2 * eps)
        rel = np.max(np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-8))
        assert rel < 1e-5


# ---------------------------------------------------------------------------
# linear SVM
# ---------------------------------------------------------------------------


def test_svm_two_points():
    model = train_linear_svm(flat([[-1.0, 0.0], [1.0, 0.0]], [0, 1]))
    assert angle_deg(model.w, np.array([1.0, 0.0])) < 2.0


def test_svm_four_points():
    X = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
    model = train_linear_svm(flat(X, [1, 1, 0, 0]))
    assert angle_deg(model.w, np.array([1.0, 0.0])) < 2.0


def maxmargin_oracle(X, y):
    """Hard-margin QP via SLSQP; independent of the production trainer."""
    s = 2.0 * y - 1.0
    d = X.shape[1]
    cons = [
        {"type": "ineq", "fun": lambda z, i=i: s[i] * (X[i] @ z[:d] + z[d]) - 1.0}
        for i in range(len(y))
    ]
    z0 = np.zeros(d + 1)
    z0[0] = 1.0
    res = minimize(
        lambda z: 0.5 * float(z[:d] @ z[:d]),
        z0,
        jac=lambda z: np.concatenate([z[:d], [0.0]]),
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 3000, "ftol": 1e-14},
    )
    assert res.success
    return res.x[:d]


def separable_instance(seed, d, n=200, margin=0.3):
    rng = np.random.default_rng(seed)
    w_true = rng.normal(size=d)
    w_true /= np.linalg.norm(w_true)
    X = rng.normal(size=(n, d))
    m = X @ w_true
    X = X + np.where(m > 0, margin, -margin)[:, None] * w_true
    return X, (X @ w_true > 0).astype(int)


def test_svm_matches_maxmargin_oracle():
    for seed in range(6):
        X, y = separable_instance(seed, 2 if seed % 2 == 0 else 3)
        model = train_linear_svm(flat(X, y), epochs=20000)
        w_oracle = maxmargin_oracle(X, y)
        assert angle_deg(model.w, w_oracle) < 2.0


def test_svm_scale_invariance():
    data = sample_gmm4(Gmm4Params(MU, PSI, 300, 30, 0.4), seed=3)
    m1 = train_linear_svm(data, epochs=3000)
    scaled = TabularDataset(data.features * 10.0, data.labels, data.attribute)
    m2 = train_linear_svm(scaled, epochs=3000)
    assert angle_deg(m1.w, m2.w) < 0.5


def test_svm_dominant_majority_direction():
    data = sample_gmm4(Gmm4Params(MU, PSI, 2000, 20, 0.25), seed=0)
    model = train_linear_svm(data)  # default budgeted epochs
    assert angle_deg(model.w, MU + PSI) < 15.0


def test_svm_rejects_single_class():
    with pytest.raises(ValueError):
        train_linear_svm(flat([[0.0], [1.0]], [0, 0]))


# ---------------------------------------------------------------------------
# boosted trees
# ---------------------------------------------------------------------------


def test_gbt_fits_xor():
    X = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
    y = [1, 0, 0, 1]
    model = train_gbt(flat(X, y), rounds=50, max_depth=2)
    np.testing.assert_array_equal(predict(model, np.asarray(X)), y)


def test_gbt_zero_rounds_is_base_rate():
    rng = np.random.default_rng(0)
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0])
    model = train_gbt(flat(rng.normal(size=(10, 2)), y), rounds=0)
    np.testing.assert_allclose(predict_proba(model, np.zeros((3, 2))), 0.3, atol=1e-12)


def test_gbt_loss_decreases():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 6))
    y = (X @ rng.normal(size=6) + rng.normal(size=300) > 0).astype(int)
    data = flat(X, y)

    def logloss(model):
        p = np.clip(predict_proba(model, X), 1e-12, 1 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))

    m1 = train_gbt(data, rounds=1)
    m100 = train_gbt(data, rounds=100)
    assert logloss(m100) < logloss(m1)


def test_gbt_loss_nonincreasing_per_round():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(120, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=120) > 0).astype(int)
    model = train_gbt(flat(X, y), rounds=30)
    F = np.full(len(y), model.base_score)
    prev = np.inf
    for tree in model.trees:
        F = F + model.learning_rate * tree.predict(X)
        p = np.clip(1.0 / (1.0 + np.exp(-F)), 1e-12, 1 - 1e-12)
        loss = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        assert loss <= prev + 1e-12
        prev = loss


def test_gbt_depth_limit():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    model = train_gbt(flat(X, y), rounds=10, max_depth=3)
    assert all(tree.depth() <= 3 for tree in model.trees)


# ---------------------------------------------------------------------------
# prediction contracts
# ---------------------------------------------------------------------------


def test_linear_tie_goes_to_one():
    model = LinearModel(np.array([1.0]), 0.0)
    assert predict(model, np.array([[0.0]]))[0] == 1


def test_proba_threshold_consistency():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] > 0).astype(int)
    for model in (
        train_logreg(flat(X, y), epochs=200),
        train_gbt(flat(X, y), rounds=20),
        train_linear_svm(flat(X, y), epochs=500),
    ):
        proba = predict_proba(model, X)
        assert np.all((proba >= 0) & (proba <= 1))
        np.testing.assert_array_equal(predict(model, X), (proba >= 0.5).astype(int))


def test_logreg_proba_monotone_in_score():
    model = train_logreg(flat([[-1.0], [1.0]], [0, 1]), epochs=500)
    xs = np.linspace(-3, 3, 21)[:, None]
    proba = predict_proba(model, xs)
    assert np.all(np.diff(proba) > 0)


def test_dimension_mismatch():
    model = LinearModel(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(ValueError):
        predict(model, np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# k-NN
# ---------------------------------------------------------------------------


def test_knn_nearest_reference():
    index = KnnIndex(np.array([[0.0], [10.0]]), np.array([0, 1]), k=1)
    labels, conf = knn_label(index, np.array([[1.0]]))
    assert labels[0] == 0 and conf[0] == 1.0


def test_knn_vote_fraction():
    index = KnnIndex(np.array([[0.0], [0.2], [5.0]]), np.array([1, 1, 0]), k=3)
    labels, conf = knn_label(index, np.array([[0.1]]))
    assert labels[0] == 1 and conf[0] == pytest.approx(2 / 3)


def test_knn_duplicate_query_returns_reference_label():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(20, 3))
    labels = (rng.random(20) < 0.5).astype(int)
    index = KnnIndex(pts, labels, k=1)
    out, _ = knn_label(index, pts[:5])
    np.testing.assert_array_equal(out, labels[:5])


def exhaustive_knn_oracle(points, labels, k, queries):
    """Per-query python-loop scan with the documented tie rules."""
    out_labels, out_conf = [], []
    for q in queries:
        dists = [float(np.sum((q - p) ** 2)) for p in points]
        order = sorted(range(len(points)), key=lambda i: (dists[i], i))[:k]
        ones = sum(labels[i] for i in order)
        win1 = 2 * ones >= k
        out_labels.append(1 if win1 else 0)
        out_conf.append((ones if win1 else k - ones) / k)
    return np.array(out_labels), np.array(out_conf)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_knn_matches_exhaustive_oracle(k):
    rng = np.random.default_rng(42)
    pts = rng.normal(size=(100, 4))
    labels = (rng.random(100) < 0.5).astype(int)
    queries = rng.normal(size=(50, 4))
    index = KnnIndex(pts, labels, k=k)
    got_labels, got_conf = knn_label(index, queries)
    want_labels, want_conf = exhaustive_knn_oracle(pts, labels, k, queries)
    np.testing.assert_array_equal(got_labels, want_labels)
    np.testing.assert_allclose(got_conf, want_conf)


def test_knn_validation():
    with pytest.raises(ValueError):
        KnnIndex(np.zeros((3, 2)), np.zeros(3, dtype=int), k=4)
    index = KnnIndex(np.zeros((3, 2)), np.zeros(3, dtype=int), k=1)
    with pytest.raises(ValueError):
        knn_label(index, np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# discrete Bayes
# ---------------------------------------------------------------------------


def test_bayes_argmax_and_tie():
    bayes = DiscreteBayes({"a": 0.7, "b": 0.5, "c": 0.3})
    assert bayes_classify(bayes, "a") == 1
    assert bayes_classify(bayes, "b") == 1  # tie toward label 1
    assert bayes_classify(bayes, "c") == 0


def test_bayes_perturbation_flips_prediction():
    bayes = DiscreteBayes({"x": 0.55}, epsilon=0.2, perturbed={"x": 0.45})
    assert bayes_classify(DiscreteBayes({"x": 0.55}), "x") == 1
    assert bayes_classify(bayes, "x") == 0


def test_bayes_tv_budget_enforced():
    with pytest.raises(ValueError, match="TV"):
        DiscreteBayes({"x": 0.9}, epsilon=0.1, perturbed={"x": 0.5})


def test_bayes_unknown_atom():
    with pytest.raises(KeyError):
        bayes_classify(DiscreteBayes({"x": 0.5}), "y")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_serialization_round_trips():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    data = flat(X, y)
    queries = rng.normal(size=(10, 3))

    linear = train_logreg(data, epochs=200)
    linear2 = model_from_json(model_to_json(linear))
    np.testing.assert_allclose(predict_proba(linear2, queries), predict_proba(linear, queries))

    gbt = train_gbt(data, rounds=15)
    gbt2 = model_from_json(model_to_json(gbt))
    np.testing.assert_allclose(predict_proba(gbt2, queries), predict_proba(gbt, queries))

    knn = KnnIndex(X, y, k=3)
    knn2 = model_from_json(model_to_json(knn))
    a1, c1 = knn_label(knn, queries)
    a2, c2 = knn_label(knn2, queries)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_allclose(c1, c2)


def test_serialization_version_guard():
    bad = model_to_json(LinearModel(np.array([1.0]), 0.0)).replace('"version": 1', '"version": 9')
    with pytest.raises(ValueError, match="version"):
        model_from_json(bad)
