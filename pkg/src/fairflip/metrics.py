"""Fairness and collective-success measurement.

All quantities are empirical plug-in estimates with no smoothing. Undefined
rates (an absent group, an empty group/label cell) raise instead of returning
NaN so sweeps cannot silently accumulate poisoned rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generators import Atom, DiscreteDistribution

__all__ = [
    "FairnessReport",
    "statistical_parity",
    "equalized_odds",
    "success",
    "estimate_tau",
    "check_one_sided_cf_fairness",
]

REPORT_COLUMNS = (
    "error",
    "sp",
    "eqod",
    "pos_rate_minority",
    "pos_rate_majority",
    "tpr_minority",
    "tpr_majority",
    "fpr_minority",
    "fpr_majority",
    "n_minority",
    "n_majority",
)


def _rate(mask_num: np.ndarray, mask_den: np.ndarray, what: str) -> float:
    n = int(mask_den.sum())
    if n == 0:
        raise ValueError(f"cannot compute {what}: empty cell")
    return float(mask_num[mask_den].mean())


def statistical_parity(predictions: np.ndarray, attribute: np.ndarray) -> float:
    """|P[pred=1 | a=1] - P[pred=1 | a=0]| from empirical frequencies."""
    pred = np.asarray(predictions)
    attr = np.asarray(attribute)
    r1 = _rate(pred == 1, attr == 1, "positive rate for group a=1")
    r0 = _rate(pred == 1, attr == 0, "positive rate for group a=0")
    return abs(r1 - r0)


def equalized_odds(
    predictions: np.ndarray, labels: np.ndarray, attribute: np.ndarray
) -> float:
    """Half the sum of the absolute TPR and FPR gaps between the groups."""
    pred = np.asarray(predictions)
    y = np.asarray(labels)
    attr = np.asarray(attribute)
    total = 0.0
    for z in (1, 0):
        r1 = _rate(pred == 1, (attr == 1) & (y == z), f"rate for cell (a=1, y={z})")
        r0 = _rate(pred == 1, (attr == 0) & (y == z), f"rate for cell (a=0, y={z})")
        total += abs(r1 - r0)
    return 0.5 * total


@dataclass(frozen=True)
class FairnessReport:
    error: float
    sp: float
    eqod: float
    pos_rate_minority: float
    pos_rate_majority: float
    tpr_minority: float
    tpr_majority: float
    fpr_minority: float
    fpr_majority: float
    n_minority: int
    n_majority: int

    @classmethod
    def from_predictions(
        cls, predictions: np.ndarray, labels: np.ndarray, attribute: np.ndarray
    ) -> "FairnessReport":
        pred = np.asarray(predictions)
        y = np.asarray(labels)
        attr = np.asarray(attribute)
        tpr1 = _rate(pred == 1, (attr == 1) & (y == 1), "TPR for a=1")
        tpr0 = _rate(pred == 1, (attr == 0) & (y == 1), "TPR for a=0")
        fpr1 = _rate(pred == 1, (attr == 1) & (y == 0), "FPR for a=1")
        fpr0 = _rate(pred == 1, (attr == 0) & (y == 0), "FPR for a=0")
        return cls(
            error=float(np.mean(pred != y)),
            sp=statistical_parity(pred, attr),
            eqod=0.5 * (abs(tpr1 - tpr0) + abs(fpr1 - fpr0)),
            pos_rate_minority=_rate(pred == 1, attr == 1, "positive rate a=1"),
            pos_rate_majority=_rate(pred == 1, attr == 0, "positive rate a=0"),
            tpr_minority=tpr1,
            tpr_majority=tpr0,
            fpr_minority=fpr1,
            fpr_majority=fpr0,
            n_minority=int((attr == 1).sum()),
            n_majority=int((attr == 0).sum()),
        )

    def csv_row(self) -> list:
        return [getattr(self, c) for c in REPORT_COLUMNS]

    @staticmethod
    def csv_header() -> list[str]:
        return list(REPORT_COLUMNS)


def success(model, g, data) -> float:
    """Fraction of rows whose prediction survives the collective's feature
    map: P[h(x) = h(g(x))] on the evaluation rows.

    ``g`` maps the dataset to a transformed feature matrix (rows aligned).
    Evaluated on untouched base-distribution data; never on modified rows.
    """
    from .models import predict

    transformed = np.asarray(g(data), dtype=float)
    if transformed.shape != data.features.shape:
        raise ValueError("feature map must preserve the feature matrix shape")
    return float(np.mean(predict(model, data.features) == predict(model, transformed)))


def estimate_tau(dist: DiscreteDistribution, g: dict) -> float:
    """Exact E_x[ max_y ( P(y|x) - P(y|g(x)) ) ] over the enumerated atoms."""
    support = dist.support()
    cond = {x: dist.p_y_given_x(x) for x in support}
    total = 0.0
    for x in support:
        gx = g[x] if isinstance(g, dict) else g(x)
        if gx not in cond:
            raise ValueError(f"feature map leaves the atom set at {x!r} -> {gx!r}")
        tau_x = float(np.max(cond[x] - cond[gx]))
        total += dist.p_x(x) * tau_x
    return total


def check_one_sided_cf_fairness(dist: DiscreteDistribution, g: dict) -> bool:
    """True iff every minority atom of positive mass gets the same most
    probable label as its counterfactual image (ties toward label 1)."""
    support = dist.support()
    cond = {x: dist.p_y_given_x(x) for x in support}

    def top(x: Atom) -> int:
        q = cond[x]
        return 1 if q[1] >= q[0] else 0

    for x in support:
        if dist.p_x_a(x, 1) <= 0:
            continue
        gx = g[x] if isinstance(g, dict) else g(x)
        if gx not in cond:
            raise ValueError(f"counterfactual image {gx!r} of {x!r} has no mass")
        if top(x) != top(gx):
            return False
    return True
