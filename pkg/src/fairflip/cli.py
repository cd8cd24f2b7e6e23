"""Command-line harness.

Subcommands:
  run              one experiment cell per repetition (no sweep axis)
  sweep-flips      sweep the flip budget
  sweep-alpha      sweep the participating minority fraction
  sweep-knowledge  sweep the visible-majority fraction
  pareto           error/fairness front over a budget grid + firm baseline
  plan             advisor mode: emit the flip plan without retraining
  theory-check     run the exact/Monte-Carlo verifier bundles
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import split
from .harness import ExperimentConfig, derive_seed, pareto, sweep, theory_check
from .harness import _make_dataset, _strategy_config  # shared plumbing
from .strategies import plan as build_plan


def _load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_json(Path(path).read_text())


def _write_outputs(out_dir: Path, result: dict, cfg: ExperimentConfig, seed: int, fmt: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        (out_dir / "results.csv").write_text(result["csv"])
    sidecar = {
        "config": cfg.to_dict(),
        "master_seed": seed,
        "config_hash": result["config_hash"],
        "failures": result["failures"],
        "timings": result["timings"],
    }
    (out_dir / "results.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    if fmt == "json":
        from .harness import RESULT_COLUMNS

        rows = [dict(zip(RESULT_COLUMNS, r.csv_fields())) for r in result["rows"]]
        (out_dir / "results_rows.json").write_text(json.dumps(rows, indent=2))


def _sweep_command(args, axis: str | None) -> int:
    cfg = _load_config(args.config)
    if axis is not None:
        if not cfg.sweep_values:
            print("config must provide sweep values", file=sys.stderr)
            return 2
        cfg = ExperimentConfig(
            dataset=cfg.dataset,
            firm_model=cfg.firm_model,
            strategy=cfg.strategy,
            sweep_axis=axis,
            sweep_values=cfg.sweep_values,
            repetitions=cfg.repetitions,
            test_fraction=cfg.test_fraction,
        )
    result = sweep(cfg, master_seed=args.seed, workers=args.workers)
    _write_outputs(Path(args.out), result, cfg, args.seed, args.format)
    print(f"wrote {len(result['rows'])} rows ({len(result['failures'])} failed cells) to {args.out}")
    return 0 if not result["failures"] else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fairflip")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    for name in ("run", "sweep-flips", "sweep-alpha", "sweep-knowledge", "pareto", "plan"):
        common(sub.add_parser(name))

    tc = sub.add_parser("theory-check")
    tc.add_argument("--which", choices=("all", "b1", "b2", "b3", "b4"), default="all")
    tc.add_argument("--seed", type=int, default=0)
    tc.add_argument("--out", default="out")
    tc.add_argument("--fast", action="store_true", help="reduced sizes for smoke runs")

    args = parser.parse_args(argv)

    if args.command == "run":
        return _sweep_command(args, None)
    if args.command == "sweep-flips":
        return _sweep_command(args, "budget")
    if args.command == "sweep-alpha":
        return _sweep_command(args, "alpha")
    if args.command == "sweep-knowledge":
        return _sweep_command(args, "knowledge")

    if args.command == "pareto":
        cfg = _load_config(args.config)
        result = pareto(cfg, master_seed=args.seed, workers=args.workers)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = ["label,error,eqod,dominated"]
        for p in result["points"]:
            lines.append(f"{p['label']},{p['error']:.12g},{p['eqod']:.12g},{int(p['dominated'])}")
        (out_dir / "pareto.csv").write_text("\n".join(lines) + "\n")
        (out_dir / "pareto.json").write_text(json.dumps(result, indent=2, sort_keys=True))
        print(f"wrote {len(result['points'])} pareto points to {args.out}")
        return 0

    if args.command == "plan":
        cfg = _load_config(args.config)
        data, _ = _make_dataset(cfg, derive_seed(args.seed, "data"))
        train, _ = split(data, cfg.test_fraction, seed=derive_seed(args.seed, "split"))
        strat = _strategy_config(cfg, "baseline-not-used", derive_seed(args.seed, "plan"))
        flip_plan = build_plan(train, strat)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "plan.csv").write_text(flip_plan.to_csv())
        (out_dir / "plan.json").write_text(flip_plan.to_json())
        print(
            f"{flip_plan.strategy}: {flip_plan.budget_used} flips "
            f"(requested {flip_plan.budget_requested}) -> {args.out}"
        )
        return 0

    if args.command == "theory-check":
        summary = theory_check(args.which, seed=args.seed, fast=args.fast)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "theory_check.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        for name, check in summary["checks"].items():
            print(f"{name}: {'PASS' if check['pass'] else 'FAIL'}")
        return 0 if summary["pass"] else 1

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
