"""Collective label-flipping for group fairness: data, learners, strategies,
metrics, and executable verification of the supporting theory."""

from .dataset import DatasetSchema, TabularDataset, load_csv, split
from .gbt import GbtModel, train_gbt
from .generators import (
    CausalModelSpec,
    DiscreteDistribution,
    GaussianPairParams,
    Gmm4Params,
    counterfactual_features,
    counterfactual_gmm4,
    enumerate_causal,
    erasure_map,
    random_causal_spec,
    sample_gaussian_pair,
    sample_gmm4,
)
from .harness import ExperimentConfig, ExperimentResult, pareto, run_once, sweep, theory_check
from .metrics import (
    FairnessReport,
    check_one_sided_cf_fairness,
    equalized_odds,
    estimate_tau,
    statistical_parity,
    success,
)
from .models import (
    DiscreteBayes,
    KnnIndex,
    LinearModel,
    bayes_classify,
    knn_label,
    model_from_json,
    model_to_json,
    predict,
    predict_proba,
    train_linear_svm,
    train_logreg,
)
from .pca import PcaTransform, pca_fit, pca_transform
from .strategies import (
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
from .theory import (
    BoundInputs,
    SnrReport,
    asymptotic_1nn_error,
    empirical_1nn_error,
    fair_projection,
    snr_report,
    spurious_direction_experiment,
    success_lower_bound,
    verify_cf_equivalence,
    verify_success_bound,
)

__version__ = "0.1.0"
