"""Experiment orchestration: configs, seeded repetition, sweeps, Pareto runs,
and the theory-check driver.

Determinism contract: the result CSV is a pure function of (config, master
seed). Per-cell seeds derive from the master seed by hashing
``master:sweep_index:rep_index`` with SHA-256, so sweep cells never share
randomness. Wall-clock timings are kept out of the CSV (the column is
reserved and written as 0) and live in the JSON sidecar instead.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetSchema, TabularDataset, load_csv, split
from .gbt import train_gbt
from .generators import (
    GaussianPairParams,
    Gmm4Params,
    counterfactual_features,
    random_causal_spec,
    sample_gmm4,
)
from .metrics import FairnessReport, success
from .models import predict, train_linear_svm, train_logreg
from .strategies import FlipPlan, StrategyConfig, apply_plan, plan, postprocess_equalized_odds
from .theory import (
    RELABELING_POLICIES,
    asymptotic_1nn_error,
    empirical_1nn_error,
    snr_report,
    spurious_direction_experiment,
    verify_cf_equivalence,
    verify_success_bound,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "RESULT_COLUMNS",
    "run_once",
    "sweep",
    "pareto",
    "theory_check",
    "derive_seed",
]

RESULT_COLUMNS = (
    "config_hash",
    "sweep_axis",
    "sweep_value",
    "seed",
    "error",
    "sp",
    "eqod",
    "success",
    "budget_used",
    "wall_ms",
)

SWEEP_AXES = ("budget", "alpha", "knowledge", "none")


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and arbitrary labels."""
    text = ":".join([str(master), *map(str, parts)])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Mirror of the JSON config file, field for field."""

    dataset: dict
    firm_model: dict = field(default_factory=lambda: {"kind": "gbt"})
    strategy: dict = field(default_factory=lambda: {"kind": "by_probability"})
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    repetitions: int = 10
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ValueError("sweep values must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        sweep_block = raw.get("sweep", {"axis": "none", "values": []})
        return cls(
            dataset=raw["dataset"],
            firm_model=raw.get("firm_model", {"kind": "gbt"}),
            strategy=raw.get("strategy", {"kind": "by_probability"}),
            sweep_axis=sweep_block.get("axis", "none"),
            sweep_values=tuple(sweep_block.get("values", ())),
            repetitions=raw.get("repetitions", 10),
            test_fraction=raw.get("test_fraction", 0.2),
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "firm_model": self.firm_model,
            "strategy": self.strategy,
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)},
            "repetitions": self.repetitions,
            "test_fraction": self.test_fraction,
        }

    def config_hash(self, master_seed: int) -> str:
        canon = json.dumps({"config": self.to_dict(), "master_seed": master_seed}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ExperimentResult:
    config_hash: str
    sweep_axis: str
    sweep_value: object
    seed: int
    error: float
    sp: float
    eqod: float
    success: float | None
    budget_used: int
    wall_ms: float

    def csv_fields(self) -> list[str]:
        return [
            self.config_hash,
            self.sweep_axis,
            _fmt(self.sweep_value),
            str(self.seed),
            _fmt(self.error),
            _fmt(self.sp),
            _fmt(self.eqod),
            "" if self.success is None else _fmt(self.success),
            str(self.budget_used),
            "0",  # reserved: timings live in the sidecar to keep the CSV deterministic
        ]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def _make_dataset(cfg: ExperimentConfig, seed: int) -> tuple[TabularDataset, object]:
    """Build the dataset and, when the source defines one, the collective's
    counterfactual feature map used for success measurement."""
    src = cfg.dataset
    kind = src["kind"]
    if kind == "gmm4":
        params = Gmm4Params(
            mu=np.asarray(src["mu"], dtype=float),
            psi=np.asarray(src["psi"], dtype=float),
            n_major=int(src["n_major"]),
            n_minor=int(src["n_minor"]),
            noise=float(src["noise"]),
            label_balance=float(src.get("label_balance", 0.5)),
        )
        data = sample_gmm4(params, seed)
        return data, (lambda d: counterfactual_features(d, params))
    if kind == "csv":
        schema = src["schema"]
        if isinstance(schema, str):
            schema_obj = DatasetSchema.from_json(Path(schema).read_text())
        else:
            schema_obj = DatasetSchema.from_json(json.dumps(schema))
        return load_csv(src["path"], schema_obj), None
    raise ValueError(f"unknown dataset kind {kind!r}")


def _train_firm(cfg: ExperimentConfig, data: TabularDataset, seed: int):
    spec = cfg.firm_model
    kind = spec.get("kind", "gbt")
    if kind == "gbt":
        return train_gbt(
            data,
            rounds=int(spec.get("rounds", 100)),
            max_depth=int(spec.get("max_depth", 3)),
            learning_rate=float(spec.get("learning_rate", 0.1)),
            seed=seed,
        )
    if kind == "logreg":
        return train_logreg(
            data,
            l2=float(spec.get("l2", 1e-4)),
            epochs=int(spec.get("epochs", 2000)),
            seed=seed,
        )
    if kind == "svm":
        epochs = spec.get("epochs")
        return train_linear_svm(data, epochs=None if epochs is None else int(epochs), seed=seed)
    raise ValueError(f"unknown firm model {kind!r}")


def _strategy_config(cfg: ExperimentConfig, sweep_value, seed: int) -> StrategyConfig:
    s = dict(cfg.strategy)
    if cfg.sweep_axis == "budget" and sweep_value != "baseline":
        s["budget"] = int(sweep_value)
    elif cfg.sweep_axis == "alpha" and sweep_value != "baseline":
        s["alpha"] = float(sweep_value)
    elif cfg.sweep_axis == "knowledge" and sweep_value != "baseline":
        s["knowledge_fraction"] = float(sweep_value)
    return StrategyConfig(
        kind=s.get("kind", "by_probability"),
        alpha=float(s.get("alpha", 0.3)),
        budget=int(s.get("budget", 10**9)),
        knowledge_fraction=float(s.get("knowledge_fraction", 1.0)),
        k_neighbors=int(s.get("k_neighbors", 1)),
        representation=s.get("representation"),
        pca_components=s.get("pca_components"),
        seed=seed,
    )


def _dataset_digest(data: TabularDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.features).tobytes())
    h.update(np.ascontiguousarray(data.labels).tobytes())
    h.update(np.ascontiguousarray(data.attribute).tobytes())
    return h.hexdigest()


def run_once(cfg: ExperimentConfig, sweep_value, seed: int, master_seed: int = 0) -> ExperimentResult:
    """One experiment cell: sample/load, split, plan on the train side only,
    retrain the firm's model, and measure on the untouched test split."""
    t0 = time.perf_counter()
    data, g = _make_dataset(cfg, derive_seed(seed, "data"))
    train, test = split(data, cfg.test_fraction, seed=derive_seed(seed, "split"))
    test_digest = _dataset_digest(test)

    if sweep_value == "baseline":
        budget_used = 0
        flipped = train
    else:
        strat = _strategy_config(cfg, sweep_value, derive_seed(seed, "plan"))
        flip_plan = plan(train, strat)
        flipped = apply_plan(train, flip_plan)
        budget_used = flip_plan.budget_used

    model = _train_firm(cfg, flipped, derive_seed(seed, "train"))
    report = FairnessReport.from_predictions(
        predict(model, test.features), test.labels, test.attribute
    )
    s = success(model, g, test) if g is not None else None
    if _dataset_digest(test) != test_digest:
        raise RuntimeError("test split was modified during the run")
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return ExperimentResult(
        config_hash=cfg.config_hash(master_seed),
        sweep_axis=cfg.sweep_axis,
        sweep_value=sweep_value,
        seed=seed,
        error=report.error,
        sp=report.sp,
        eqod=report.eqod,
        success=s,
        budget_used=budget_used,
        wall_ms=wall_ms,
    )


def _run_cell(args) -> tuple[int, int, ExperimentResult | Exception]:
    cfg, value_idx, value, rep, cell_seed, master_seed = args
    try:
        return value_idx, rep, run_once(cfg, value, cell_seed, master_seed)
    except Exception as exc:  # failed cells must not abort the sweep
        return value_idx, rep, exc


def sweep(
    cfg: ExperimentConfig,
    master_seed: int = 0,
    workers: int = 1,
    out_csv: str | Path | None = None,
) -> dict:
    """Cartesian product of sweep values x repetitions, plus a per-seed
    baseline (no collective action). Aggregate mean/std rows are appended per
    sweep value. Failed cells are recorded in the sidecar and skipped in the
    CSV; the run continues.
    """
    values: list = ["baseline", *cfg.sweep_values] if cfg.sweep_axis != "none" else ["baseline", "run"]
    if cfg.sweep_axis == "none":
        values = ["baseline", "none"]
    tasks = []
    for vi, value in enumerate(values):
        for rep in range(cfg.repetitions):
            cell_seed = derive_seed(master_seed, vi, rep)
            tasks.append((cfg, vi, value, rep, cell_seed, master_seed))

    outcomes: list[tuple[int, int, ExperimentResult | Exception]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, tasks))
    else:
        outcomes = [_run_cell(t) for t in tasks]
    outcomes.sort(key=lambda o: (o[0], o[1]))

    rows: list[ExperimentResult] = []
    failures: list[dict] = []
    timings: list[dict] = []
    for vi, rep, outcome in outcomes:
        if isinstance(outcome, Exception):
            failures.append(
                {"sweep_value": _fmt(values[vi]), "rep": rep, "error": str(outcome)}
            )
        else:
            rows.append(outcome)
            timings.append(
                {"sweep_value": _fmt(values[vi]), "seed": outcome.seed, "wall_ms": outcome.wall_ms}
            )

    aggregates: list[list[str]] = []
    chash = cfg.config_hash(master_seed)
    for value in values:
        group = [r for r in rows if r.sweep_value == value]
        if not group:
            continue
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            succ_vals = [r.success for r in group if r.success is not None]
            aggregates.append(
                [
                    chash,
                    cfg.sweep_axis,
                    _fmt(value),
                    stat,
                    _fmt(float(fn([r.error for r in group]))),
                    _fmt(float(fn([r.sp for r in group]))),
                    _fmt(float(fn([r.eqod for r in group]))),
                    _fmt(float(fn(succ_vals))) if succ_vals else "",
                    _fmt(float(fn([r.budget_used for r in group]))),
                    "0",
                ]
            )

    csv_lines = [",".join(RESULT_COLUMNS)]
    csv_lines.extend(",".join(r.csv_fields()) for r in rows)
    csv_lines.extend(",".join(a) for a in aggregates)
    csv_text = "\n".join(csv_lines) + "\n"
    if out_csv is not None:
        Path(out_csv).write_text(csv_text)

    return {
        "config_hash": chash,
        "rows": rows,
        "aggregates": aggregates,
        "failures": failures,
        "timings": timings,
        "csv": csv_text,
    }


def pareto(cfg: ExperimentConfig, master_seed: int = 0, workers: int = 1) -> dict:
    """Error/fairness trade-off points over a budget grid, plus the firm-side
    post-processing baseline, with non-dominated flags (both coordinates are
    minimised)."""
    if cfg.sweep_axis != "budget":
        raise ValueError("pareto runs need a budget sweep axis")
    swept = sweep(cfg, master_seed=master_seed, workers=workers)
    points: list[dict] = []
    for value in ["baseline", *cfg.sweep_values]:
        group = [r for r in swept["rows"] if r.sweep_value == value]
        if not group:
            continue
        points.append(
            {
                "label": _fmt(value),
                "error": float(np.mean([r.error for r in group])),
                "eqod": float(np.mean([r.eqod for r in group])),
            }
        )

    pp_errors, pp_eqods = [], []
    for rep in range(cfg.repetitions):
        seed = derive_seed(master_seed, "postproc", rep)
        data, _ = _make_dataset(cfg, derive_seed(seed, "data"))
        train, test = split(data, cfg.test_fraction, seed=derive_seed(seed, "split"))
        model = _train_firm(cfg, train, derive_seed(seed, "train"))
        post = postprocess_equalized_odds(model, train, seed=derive_seed(seed, "mix"))
        pred = post.predict(test.features, test.attribute)
        report = FairnessReport.from_predictions(pred, test.labels, test.attribute)
        pp_errors.append(report.error)
        pp_eqods.append(report.eqod)
    points.append(
        {
            "label": "postprocess",
            "error": float(np.mean(pp_errors)),
            "eqod": float(np.mean(pp_eqods)),
        }
    )

    for p in points:
        p["dominated"] = any(
            (q["error"] <= p["error"] and q["eqod"] <= p["eqod"])
            and (q["error"] < p["error"] or q["eqod"] < p["eqod"])
            for q in points
            if q is not p
        )
    return {"config_hash": swept["config_hash"], "points": points, "failures": swept["failures"]}


# ---------------------------------------------------------------------------
# Theory-check driver
# ---------------------------------------------------------------------------

B2_DEFAULTS = dict(p=20000, m=30, noise=0.25, epochs=300, seeds=10, n_search=64)

B4_CASES = (
    # (mu, sigma, mu_min, sigma_min) in the strong-signal regime of the
    # closed form; each is validated against the Monte-Carlo oracle.
    ((3.0, 0.0), ((1.0, 0.0), (0.0, 1.0)), (1.2, 0.9), ((1.0, 0.0), (0.0, 1.0))),
    ((3.0, 0.0), ((1.0, 0.0), (0.0, 1.0)), (-0.5, 1.0), ((1.0, 0.0), (0.0, 1.0))),
    ((5.0, 0.0), ((2.0, 0.0), (0.0, 1.0)), (1.0, 0.7), ((1.6, 0.0), (0.0, 0.8))),
    ((3.0, 0.0, 1.0), ((1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0)), (1.0, 1.0, -0.5),
     ((1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0))),
    ((3.5, 0.0), ((1.0, 0.0), (0.0, 1.0)), (0.0, 1.5), ((1.0, 0.0), (0.0, 1.0))),
)

B4_PROJECTION_CASES = (
    ((3.0, 0.0), (-1.2, 1.6)),
    ((2.5, 1.0), (-1.0, 1.5)),
)


def _check_b1(seed: int, n_specs: int = 50) -> dict:
    rows = []
    rng = np.random.default_rng(seed)
    for i in range(n_specs):
        spec = random_causal_spec(int(rng.integers(2, 7)), derive_seed(seed, "b1", i))
        alpha = float(rng.uniform(0.05, 0.95))
        rows.append(verify_cf_equivalence(spec, alpha))
    return {
        "n_specs": n_specs,
        "equivalence_failures": sum(1 for r in rows if not r["equivalence_ok"]),
        "max_decomposition_error": max(r["decomposition_error"] for r in rows),
        "n_success_below_one": sum(1 for r in rows if r["success"] < 1.0 - 1e-12),
        "pass": all(r["equivalence_ok"] for r in rows)
        and max(r["decomposition_error"] for r in rows) <= 1e-12,
    }


def _check_b2(seed: int, fast: bool = False) -> dict:
    cfg = dict(B2_DEFAULTS)
    if fast:
        cfg.update(p=4000, m=10, seeds=3, n_search=8)
    params = Gmm4Params(
        mu=np.array([0.0, 1.0]),
        psi=np.array([1.0, 0.0]),
        n_major=cfg["p"],
        n_minor=cfg["m"],
        noise=cfg["noise"],
    )
    policies = {}
    for policy in RELABELING_POLICIES:
        angles, eqods = [], []
        for rep in range(cfg["seeds"]):
            r = spurious_direction_experiment(
                params,
                policy,
                seed=derive_seed(seed, "b2", policy, rep),
                epochs=cfg["epochs"],
                n_search=cfg["n_search"],
            )
            angles.append(r["angle_deg"])
            eqods.append(r["eqod"])
        policies[policy] = {
            "median_angle_deg": float(np.median(angles)),
            "median_eqod": float(np.median(eqods)),
        }
    angle_ok = all(p["median_angle_deg"] < 15.0 for p in policies.values())
    eqod_ok = all(abs(p["median_eqod"] - 0.5) < 0.1 for p in policies.values())
    return {"config": cfg, "policies": policies, "pass": angle_ok and eqod_ok}


def _check_b3(seed: int, n_specs: int = 50) -> dict:
    alphas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    label_errors = [0.0, 0.1, 0.25, 0.4]
    min_margin = np.inf
    violations = 0
    for i in range(n_specs):
        spec = random_causal_spec(6, derive_seed(seed, "b3", i))
        report = verify_success_bound(spec, alphas, label_errors)
        min_margin = min(min_margin, report["min_margin"])
        violations += report["violations"]
    return {
        "n_specs": n_specs,
        "grid": {"alphas": alphas, "label_errors": label_errors},
        "min_margin": float(min_margin),
        "violations": violations,
        "pass": violations == 0,
    }


def _check_b4(seed: int, fast: bool = False) -> dict:
    n = 4000 if fast else 20000
    rows = []
    for i, (mu, sigma, mu_min, sigma_min) in enumerate(B4_CASES):
        g = GaussianPairParams(
            np.array(mu), np.array(sigma), np.array(mu_min), np.array(sigma_min)
        )
        predicted = asymptotic_1nn_error(g)
        observed = empirical_1nn_error(g, n_ref=n, n_queries=n, seed=derive_seed(seed, "b4", i))
        rows.append({"case": i, "predicted": predicted, "observed": observed,
                     "abs_diff": abs(predicted - observed)})
    proj_rows = []
    for i, (mu, mu_min) in enumerate(B4_PROJECTION_CASES):
        g = GaussianPairParams(np.array(mu), np.eye(2), np.array(mu_min), np.eye(2))
        rep = snr_report(g)
        raw = empirical_1nn_error(g, n_ref=n, n_queries=n, seed=derive_seed(seed, "b4p", i, 0))
        proj = empirical_1nn_error(
            g, n_ref=n, n_queries=n, seed=derive_seed(seed, "b4p", i, 1),
            projection=rep.projection,
        )
        proj_rows.append(
            {
                "case": i,
                "snr_raw": rep.snr_raw,
                "snr_proj": rep.snr_proj,
                "improvement_predicted": rep.snr_proj > rep.snr_raw,
                "raw_error": raw,
                "proj_error": proj,
                "margin": raw - proj,
            }
        )
    tol = 0.02 if fast else 0.01
    closed_ok = all(r["abs_diff"] < tol for r in rows)
    proj_ok = all(
        (not r["improvement_predicted"]) or r["margin"] >= 0.02 for r in proj_rows
    )
    return {"closed_form": rows, "projection": proj_rows, "pass": closed_ok and proj_ok}


def theory_check(which: str = "all", seed: int = 0, fast: bool = False) -> dict:
    """Run the selected verifier bundles and return a machine-readable
    summary; ``pass`` is True iff every selected bundle passed."""
    checks = {}
    if which in ("all", "b1"):
        checks["b1"] = _check_b1(seed)
    if which in ("all", "b2"):
        checks["b2"] = _check_b2(seed, fast=fast)
    if which in ("all", "b3"):
        checks["b3"] = _check_b3(seed)
    if which in ("all", "b4"):
        checks["b4"] = _check_b4(seed, fast=fast)
    if not checks:
        raise ValueError(f"unknown check selector {which!r}")
    return {"which": which, "seed": seed, "checks": checks,
            "pass": all(c["pass"] for c in checks.values())}
