"""
Command-line entry point.

    python -m sim.run_sim [global flags] {gradcheck,pgd,train,evaluate,sweep,reproduce} ...

Artifacts go to <output_dir>/<command-or-recipe>/ with fixed file names.
Exit status: 0 ok, 1 runtime/config error or failed gradcheck, 2 usage error.
"""
import argparse
import logging
import sys
import time
from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import yaml

from sim.artifacts import make_meta, read_json, write_csv, write_json
from sim.config import CliConfig, ConfigError, parse_config, recipe_path
from sim.logging_utils import set_console_level, setup_logger
from sim.report_types import FigureDoc, GradcheckDoc, GradcheckRow, ParamsDoc, PgdResultDoc, ReportDoc
from src.channel_model import ChannelMatrix, generate_deployment, sample_channel
from src.experiments import (
    BASELINE,
    SWEEP_AXES,
    cdf_frame,
    mean_rate_increase,
    relative_rate_increase,
    run_experiment,
    run_figure,
    sensitivity_sweep,
)
from src.gradcheck import run_all
from src.pgd_solver import run_pgd
from src.unfolded_net import UnfoldedParams, train_offline

logger = logging.getLogger("sim.run_sim")

COMMANDS = ("gradcheck", "pgd", "train", "evaluate", "sweep", "reproduce")


# ----------------------------- Subcommands -----------------------------

def cmd_gradcheck(cfg: CliConfig, opts: Namespace) -> int:
    results = run_all(seed=cfg.seed)
    rows: List[GradcheckRow] = [
        {"suite": r.suite, "cases": r.cases, "max_rel_error": r.max_rel_error,
         "tolerance": r.tolerance, "passed": r.passed, "worst_case": r.worst_case}
        for r in results
    ]
    print(pd.DataFrame(rows).to_string(index=False))
    body: GradcheckDoc = {"results": rows}
    write_json(_out_dir(cfg, "gradcheck") / "gradcheck.json", body, make_meta(cfg.seed, cfg.echo()))
    failed = [r.suite for r in results if not r.passed]
    if failed:
        logger.error(f"gradcheck failed: {', '.join(failed)}")
        return 1
    return 0


def cmd_pgd(cfg: CliConfig, opts: Namespace) -> int:
    exp = cfg.experiment
    channel_file = getattr(opts, "channel", None)
    rng = np.random.default_rng([cfg.seed, 1, 0])
    if channel_file:
        H = ChannelMatrix.from_dict(read_json(channel_file))
    else:
        H = sample_channel(generate_deployment(exp.scenario, rng), exp.propagation, rng)

    result = run_pgd(H, replace(exp.pgd, record_trajectory=True), exp.p_max_w, rng)
    logger.info(f"PGD: sum rate {result.sum_rate_final:.4f} bps/Hz after {result.iterations_run} iterations "
                f"({result.non_monotone_steps} non-monotone steps)")

    out = _out_dir(cfg, "pgd")
    meta = make_meta(cfg.seed, cfg.echo())
    body: PgdResultDoc = {
        "channel_digest": H.digest(),
        "p_final_w": result.p_final.p.tolist(),
        "sum_rate_final": result.sum_rate_final,
        "iterations_run": result.iterations_run,
        "non_monotone_steps": result.non_monotone_steps,
    }
    write_json(out / "pgd_result.json", body, meta)
    trajectory = pd.DataFrame({"iteration": np.arange(1, len(result.trajectory) + 1),
                               "sum_rate": result.trajectory})
    write_csv(out / "trajectory.csv", trajectory, meta)
    return 0


def cmd_train(cfg: CliConfig, opts: Namespace) -> int:
    exp = cfg.experiment
    # same substream run_experiment pretrains on, so evaluate --params reproduces it
    rng = np.random.default_rng([cfg.seed, 0])
    params, history = train_offline(
        exp.train, exp.scenario, exp.propagation, exp.dupgd.n_layers, exp.dupgd.variant,
        p_max_w=exp.p_max_w, hidden_width=exp.dupgd.hidden_width, rng=rng,
    )
    out = _out_dir(cfg, "train")
    meta = make_meta(cfg.seed, cfg.echo())
    doc: ParamsDoc = params.to_dict(exp.train)
    write_json(out / "params.json", doc, meta)
    write_csv(out / "history.csv", history.to_frame(), meta)
    logger.info(f"training wall clock {history.wall_clock_s:.1f}s (started {history.started_at})")
    return 0


def cmd_evaluate(cfg: CliConfig, opts: Namespace) -> int:
    params = None
    params_file = getattr(opts, "params", None)
    if params_file:
        params = UnfoldedParams.from_dict(read_json(params_file))
        logger.info(f"using pretrained DUPGD parameters from {params_file}")
    report = run_experiment(cfg.experiment, offline_params=params)

    out = _out_dir(cfg, "evaluate")
    meta = make_meta(cfg.seed, cfg.echo())
    body: ReportDoc = report.to_dict()
    write_json(out / "report.json", body, meta)
    write_csv(out / "summary.csv", report.summary_frame(), meta)
    write_csv(out / "sum_rate_cdf.csv", cdf_frame(report, "sum_rate"), meta)
    if BASELINE in report.samples:
        absolute = mean_rate_increase(report)
        relative = relative_rate_increase(report)
        frame = pd.DataFrame({"method": list(absolute),
                              "mean_rate_increase": list(absolute.values()),
                              "relative_increase_pct": [relative[m] for m in absolute]})
        write_csv(out / "mean_rate_increase.csv", frame, meta)
    print(report.summary_frame().to_string(index=False))
    return 0


def cmd_sweep(cfg: CliConfig, opts: Namespace) -> int:
    values = [yaml.safe_load(v) for v in opts.values.split(",") if v.strip()]
    table = sensitivity_sweep(cfg.experiment, opts.axis, values)
    write_csv(_out_dir(cfg, "sweep") / "sweep.csv", table, make_meta(cfg.seed, cfg.echo()))
    print(table.to_string(index=False))
    return 0


def cmd_reproduce(cfg: CliConfig, opts: Namespace) -> int:
    name = opts.figure
    if not cfg.figure:
        raise ConfigError(f"{name}: recipe has no figure block")
    t0 = time.perf_counter()
    result = run_figure(name, cfg.experiment, cfg.figure)
    out = _out_dir(cfg, name)
    meta = make_meta(cfg.seed, cfg.echo())
    for stem, table in result.tables.items():
        write_csv(out / f"{stem}.csv", table, meta)
    body: FigureDoc = {"figure": name, "kind": cfg.figure["kind"], "summary": result.summary}
    write_json(out / f"{name}.json", body, meta)
    logger.info(f"{name} reproduced in {time.perf_counter() - t0:.1f}s")
    return 0


HANDLERS = {
    "gradcheck": cmd_gradcheck,
    "pgd": cmd_pgd,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
}


def _out_dir(cfg: CliConfig, name: str) -> Path:
    path = cfg.output_dir / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def dispatch(subcommand: str, cfg: CliConfig, opts: Optional[Namespace] = None) -> int:
    handler = HANDLERS.get(subcommand)
    if handler is None:
        logger.error(f"unknown subcommand {subcommand!r}; expected one of {', '.join(COMMANDS)}")
        return 2
    try:
        return handler(cfg, opts or Namespace())
    except ValueError as e:
        # ConfigError, InfeasibleScenarioError, DimensionError, NonFiniteError
        logger.error(f"{subcommand}: {e}")
        return 1


# ----------------------------- Parser -----------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m sim.run_sim",
                                     description="DUPGD power-control simulator")
    parser.add_argument("--config", type=Path, help="YAML config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. pgd.step_size=0.05 (repeatable)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--scenario", help="scenario preset (scen1 | scen2)")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging on the console")

    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p = sub.add_parser("pgd", help="run iterative PGD on one channel")
    p.add_argument("--channel", type=Path, help="channel fixture JSON (default: sample one)")
    sub.add_parser("train", help="offline DUPGD training")
    p = sub.add_parser("evaluate", help="Monte-Carlo comparison of the configured methods")
    p.add_argument("--params", type=Path, help="pretrained params.json for dupgd_offline")
    p = sub.add_parser("sweep", help="sensitivity sweep over one axis")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p = sub.add_parser("reproduce", help="run a figure recipe from config/recipes")
    p.add_argument("figure", help="recipe name, e.g. fig5")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("src", "sim"):
        setup_logger(name, logging.DEBUG if args.verbose else logging.INFO)

    try:
        path = args.config
        if args.command == "reproduce":
            if path is not None:
                raise ConfigError("--config: reproduce takes its config from the recipe")
            path = recipe_path(args.figure)
        cfg = parse_config(path, args.overrides, seed=args.seed, output_dir=args.output_dir,
                           workers=args.workers, scenario=args.scenario)
    except ConfigError as e:
        logger.error(str(e))
        return 1

    for name in ("src", "sim"):
        set_console_level(name, "DEBUG" if args.verbose else cfg.log_level)
    logger.info(f"{args.command}: seed={cfg.seed} workers={cfg.workers} output={cfg.output_dir}")
    return dispatch(args.command, cfg, args)


if __name__ == "__main__":
    sys.exit(main())
