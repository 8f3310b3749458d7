# src/experiments.py

from __future__ import annotations

"""
Monte-Carlo evaluation harness.

Every realization draws one deployment and one channel from its own
substream (seed, 1, index) and evaluates every requested method on that
same channel, so comparisons are paired. DUPGD-offline is trained once per
config (substream (seed, 0)) before the loop; DUPGD-online adapts per
realization. Realizations may run in worker processes; results are merged
in index order, so a report depends only on the config and seed.

Figure helpers turn reports into the tables behind each result artifact:
rate vs. iterations, sum-rate and per-link-rate CDFs, mean rate increase
over max power, transmit-power distribution and sensitivity sweeps.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src import TOOL_NAME, __version__
from src.channel_model import PropagationParams, ScenarioSpec, generate_deployment, sample_channel
from src.objective import PowerVector, link_rates
from src.pgd_solver import PgdConfig, run_pgd
from src.unfolded_net import (
    VARIANTS,
    TrainConfig,
    UnfoldedParams,
    dupgd_forward,
    init_params,
    progress_enabled,
    train_offline,
    train_online,
)

logger = logging.getLogger(__name__)

METHODS = ("max_power", "pgd", "dupgd_online", "dupgd_offline")
BASELINE = "max_power"
SCENARIO_PRESETS: Dict[str, Optional[float]] = {"scen1": None, "scen2": 3.0}
SWEEP_AXES = ("n_links", "pathloss_exponent", "shadowing_std")
ONLINE_INITS = ("fresh", "pretrained")
FIGURE_KINDS = (
    "rate_vs_iterations",
    "sum_rate_cdf",
    "link_rate_cdf",
    "mean_rate_increase",
    "power_distribution",
    "sensitivity",
)

_TRAIN_STREAM = 0
_REALIZATION_STREAM = 1


# ----------------------------- Config -----------------------------

@dataclass(frozen=True)
class DupgdConfig:
    n_layers: int = 40
    variant: str = "scalar_step"
    hidden_width: int = 64
    online_init: str = "fresh"      # fresh | pretrained

    def __post_init__(self):
        if int(self.n_layers) != self.n_layers or self.n_layers < 1:
            raise ValueError(f"n_layers must be a positive integer (got {self.n_layers})")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS} (got {self.variant!r})")
        if int(self.hidden_width) != self.hidden_width or self.hidden_width < 1:
            raise ValueError(f"hidden_width must be a positive integer (got {self.hidden_width})")
        if self.online_init not in ONLINE_INITS:
            raise ValueError(f"online_init must be one of {ONLINE_INITS} (got {self.online_init!r})")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    propagation: PropagationParams = field(default_factory=PropagationParams)
    methods: Tuple[str, ...] = METHODS
    n_realizations: int = 500
    pgd: PgdConfig = field(default_factory=PgdConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dupgd: DupgdConfig = field(default_factory=DupgdConfig)
    p_max_w: float = 10.0
    seed: int = 2024
    workers: int = 1
    record_pgd_trajectory: bool = False
    progress: bool = False

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ValueError("methods must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"methods: unknown method(s) {unknown}; expected a subset of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError(f"methods: duplicates in {list(self.methods)}")
        if int(self.n_realizations) != self.n_realizations or self.n_realizations < 1:
            raise ValueError(f"n_realizations must be a positive integer (got {self.n_realizations})")
        if not np.isfinite(self.p_max_w) or self.p_max_w <= 0:
            raise ValueError(f"p_max_w must be > 0 (got {self.p_max_w})")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers must be a positive integer (got {self.workers})")

    def to_dict(self) -> Dict[str, Any]:
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        doc["scenario"]["area_m"] = list(self.scenario.area_m)
        return doc

    def needs_offline_params(self) -> bool:
        return "dupgd_offline" in self.methods or (
            "dupgd_online" in self.methods and self.dupgd.online_init == "pretrained"
        )


def apply_scenario(cfg: ExperimentConfig, preset: str) -> ExperimentConfig:
    """Swap in a named scenario preset (scen1: unbounded pairs, scen2: 3 m bound)."""
    if preset not in SCENARIO_PRESETS:
        raise ValueError(f"unknown scenario preset {preset!r}; expected one of {sorted(SCENARIO_PRESETS)}")
    return replace(cfg, scenario=replace(cfg.scenario, max_pair_distance_m=SCENARIO_PRESETS[preset]))


# ----------------------------- Report types -----------------------------

@dataclass(eq=False)
class MethodSamples:
    sum_rates: np.ndarray     # (R,)
    link_rates: np.ndarray    # (R, N)
    powers_w: np.ndarray      # (R, N)

    @property
    def powers_dbw(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.powers_w)


@dataclass(eq=False)
class ExperimentReport:
    config: ExperimentConfig
    samples: Dict[str, MethodSamples]
    channel_hashes: List[str]
    pgd_mean_trajectory: Optional[np.ndarray] = None
    offline_params: Optional[UnfoldedParams] = None
    seed: int = 0
    version: str = __version__
    tool: str = TOOL_NAME

    @property
    def methods(self) -> Tuple[str, ...]:
        return tuple(self.samples)

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for method, s in self.samples.items():
            mean_w = float(np.mean(s.powers_w))
            rows.append({
                "method": method,
                "n_realizations": int(s.sum_rates.shape[0]),
                "mean_sum_rate": float(np.mean(s.sum_rates)),
                "mean_link_rate": float(np.mean(s.link_rates)),
                "mean_power_w": mean_w,
                "mean_power_dbw": _to_dbw(mean_w),
            })
        return pd.DataFrame(rows, columns=["method", "n_realizations", "mean_sum_rate",
                                           "mean_link_rate", "mean_power_w", "mean_power_dbw"])

    def to_dict(self) -> Dict[str, Any]:
        """JSON body (no meta block; sim.artifacts adds it)."""
        summary = []
        for row in self.summary_frame().to_dict(orient="records"):
            zero = not np.isfinite(row["mean_power_dbw"])
            row["mean_power_dbw"] = None if zero else row["mean_power_dbw"]
            row["zero_power"] = zero
            summary.append(row)
        return {
            "methods": list(self.methods),
            "n_realizations": self.config.n_realizations,
            "n_links": self.config.scenario.n_links,
            "summary": summary,
            "channel_hashes": list(self.channel_hashes),
            "pgd_mean_trajectory": None if self.pgd_mean_trajectory is None
            else [float(v) for v in self.pgd_mean_trajectory],
            "dupgd_offline_trained_per_config": self.config.needs_offline_params(),
        }


def _to_dbw(mean_w: float) -> float:
    return float("-inf") if mean_w <= 0 else float(10.0 * np.log10(mean_w))


# ----------------------------- Core loop -----------------------------

def _pretrain(cfg: ExperimentConfig) -> UnfoldedParams:
    rng = np.random.default_rng([cfg.seed, _TRAIN_STREAM])
    params, history = train_offline(
        cfg.train, cfg.scenario, cfg.propagation, cfg.dupgd.n_layers, cfg.dupgd.variant,
        p_max_w=cfg.p_max_w, hidden_width=cfg.dupgd.hidden_width, rng=rng,
    )
    if history.losses:
        logger.info(f"pretrained DUPGD K={cfg.dupgd.n_layers}: final loss {history.losses[-1]:.4f}")
    return params


def _evaluate_realization(index: int, cfg: ExperimentConfig,
                          offline_params: Optional[UnfoldedParams]) -> Dict[str, Any]:
    rng = np.random.default_rng([cfg.seed, _REALIZATION_STREAM, index])
    dep = generate_deployment(cfg.scenario, rng)
    H = sample_channel(dep, cfg.propagation, rng)
    p_max = cfg.p_max_w
    p_full = PowerVector.full(H.n_links, p_max)

    out: Dict[str, Any] = {"hash": H.digest(), "methods": {}, "trajectory": None}
    for method in cfg.methods:
        if method == "max_power":
            p = p_full
        elif method == "pgd":
            pgd_cfg = replace(cfg.pgd, record_trajectory=cfg.record_pgd_trajectory)
            result = run_pgd(H, pgd_cfg, p_max, rng)
            p = result.p_final
            out["trajectory"] = result.trajectory
        elif method == "dupgd_offline":
            p, _ = dupgd_forward(offline_params, H, p_full)
        else:
            if cfg.dupgd.online_init == "pretrained":
                start = offline_params
            else:
                start = init_params(cfg.dupgd.n_layers, cfg.dupgd.variant, cfg.train.init_step_size, rng,
                                    n_links=H.n_links, hidden_width=cfg.dupgd.hidden_width,
                                    p_max_w=p_max)
            _, p = train_online(start, H, cfg.train, p_max_w=p_max)
        rates = link_rates(p, H).r
        out["methods"][method] = (rates, np.array(p.p))
    return out


def _mean_trajectory(trajectories: List[Optional[List[float]]]) -> Optional[np.ndarray]:
    if not trajectories or any(t is None for t in trajectories):
        return None
    length = max(len(t) for t in trajectories)
    # runs stopped early by tol hold their last value
    padded = np.array([list(t) + [t[-1]] * (length - len(t)) for t in trajectories])
    return padded.mean(axis=0)


def run_experiment(cfg: ExperimentConfig, *,
                   offline_params: Optional[UnfoldedParams] = None) -> ExperimentReport:
    """
    Evaluate cfg.methods on cfg.n_realizations paired channel realizations.
    A provided offline_params replaces the per-config pretraining.
    """
    t0 = time.perf_counter()
    if cfg.needs_offline_params() and offline_params is None:
        offline_params = _pretrain(cfg)
    if offline_params is not None and offline_params.n_links not in (None, cfg.scenario.n_links):
        raise ValueError(f"offline params were trained for {offline_params.n_links} links, "
                         f"scenario has {cfg.scenario.n_links}")

    work = partial(_evaluate_realization, cfg=cfg, offline_params=offline_params)
    indices = range(cfg.n_realizations)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunk = max(1, cfg.n_realizations // (4 * cfg.workers))
            results = list(tqdm(pool.map(work, indices, chunksize=chunk), total=cfg.n_realizations,
                                desc="realizations", disable=not progress_enabled(cfg.progress)))
    else:
        bar = tqdm(indices, desc="realizations", disable=not progress_enabled(cfg.progress))
        results = [work(i) for i in bar]

    samples = {}
    for method in cfg.methods:
        rates = np.array([r["methods"][method][0] for r in results])
        powers = np.array([r["methods"][method][1] for r in results])
        samples[method] = MethodSamples(rates.sum(axis=1), rates, powers)

    trajectory = None
    if cfg.record_pgd_trajectory and "pgd" in cfg.methods:
        trajectory = _mean_trajectory([r["trajectory"] for r in results])

    logger.info(
        f"experiment: {cfg.n_realizations} realizations x {len(cfg.methods)} methods, "
        f"N={cfg.scenario.n_links}, {time.perf_counter() - t0:.1f}s"
    )
    return ExperimentReport(
        config=cfg,
        samples=samples,
        channel_hashes=[r["hash"] for r in results],
        pgd_mean_trajectory=trajectory,
        offline_params=offline_params,
        seed=cfg.seed,
    )


# ----------------------------- Metrics -----------------------------

def empirical_cdf(samples: Sequence[float]) -> List[Tuple[float, float]]:
    values = np.asarray(samples, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("samples must be non-empty")
    ordered = np.sort(values, kind="stable")
    n = ordered.size
    return [(float(v), (k + 1) / n) for k, v in enumerate(ordered)]


def cdf_frame(report: ExperimentReport, quantity: str = "sum_rate") -> pd.DataFrame:
    """Long table method,value,cdf over sum-rate or per-link-rate samples."""
    if quantity not in ("sum_rate", "link_rate"):
        raise ValueError(f"quantity must be 'sum_rate' or 'link_rate' (got {quantity!r})")
    frames = []
    for method, s in report.samples.items():
        data = s.sum_rates if quantity == "sum_rate" else s.link_rates
        pairs = empirical_cdf(data)
        frames.append(pd.DataFrame({"method": method,
                                    "value": [v for v, _ in pairs],
                                    "cdf": [c for _, c in pairs]}))
    return pd.concat(frames, ignore_index=True)


def _baseline(report: ExperimentReport) -> MethodSamples:
    if BASELINE not in report.samples:
        raise ValueError(f"report has no '{BASELINE}' baseline (methods: {list(report.samples)})")
    return report.samples[BASELINE]


def mean_rate_increase(report: ExperimentReport) -> Dict[str, float]:
    """Paired mean sum-rate gain over max power, bps/Hz."""
    base = _baseline(report).sum_rates
    return {m: float(np.mean(s.sum_rates - base)) for m, s in report.samples.items()}


def relative_rate_increase(report: ExperimentReport) -> Dict[str, float]:
    """Mean sum-rate gain over max power in percent of the baseline mean."""
    base_mean = float(np.mean(_baseline(report).sum_rates))
    if base_mean <= 0:
        raise ValueError("baseline mean sum rate must be > 0")
    return {m: 100.0 * (float(np.mean(s.sum_rates)) - base_mean) / base_mean
            for m, s in report.samples.items()}


@dataclass(frozen=True)
class PowerSummary:
    cdf: List[Tuple[float, float]]   # over per-link powers in watts
    mean_w: float
    mean_dbw: float                   # -inf when every allocation is zero
    fraction_at_max: float

    @property
    def zero_power(self) -> bool:
        return self.mean_w <= 0


def power_distribution(report: ExperimentReport) -> Dict[str, PowerSummary]:
    p_max = report.config.p_max_w
    out = {}
    for method, s in report.samples.items():
        powers = s.powers_w.ravel()
        mean_w = float(np.mean(powers))
        out[method] = PowerSummary(
            cdf=empirical_cdf(powers),
            mean_w=mean_w,
            mean_dbw=_to_dbw(mean_w),
            fraction_at_max=float(np.mean(powers >= p_max)),
        )
    return out


# ----------------------------- Campaigns -----------------------------

def _check_grid(iteration_grid: Sequence[int]) -> List[int]:
    grid = [int(g) for g in iteration_grid]
    if not grid:
        raise ValueError("iteration_grid must not be empty")
    if any(g != o for g, o in zip(grid, iteration_grid)) or min(grid) < 1:
        raise ValueError(f"iteration_grid must hold positive integers (got {list(iteration_grid)})")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"iteration_grid must be strictly ascending (got {grid})")
    return grid


def rate_vs_iterations(cfg: ExperimentConfig, iteration_grid: Sequence[int],
                       scenarios: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Mean per-link rate of PGD truncated at each grid point and of DUPGD with
    K = grid point (retrained per K). One block per scenario preset.
    """
    grid = _check_grid(iteration_grid)
    dupgd_methods = [m for m in cfg.methods if m.startswith("dupgd")] or ["dupgd_offline"]
    rows = []
    for name in scenarios or [None]:
        scen_cfg = cfg if name is None else apply_scenario(cfg, name)
        label = name or "config"
        n = scen_cfg.scenario.n_links

        pgd_cfg = replace(scen_cfg, methods=("pgd",), record_pgd_trajectory=True,
                          pgd=replace(scen_cfg.pgd, max_iters=grid[-1], tol=None))
        traj = run_experiment(pgd_cfg).pgd_mean_trajectory
        for g in grid:
            rows.append({"scenario": label, "iterations": g, "method": "pgd",
                         "mean_link_rate": float(traj[g - 1]) / n})

        for g in grid:
            k_cfg = replace(scen_cfg, methods=tuple(dupgd_methods),
                            dupgd=replace(scen_cfg.dupgd, n_layers=g))
            report = run_experiment(k_cfg)
            for method in dupgd_methods:
                rows.append({"scenario": label, "iterations": g, "method": method,
                             "mean_link_rate": float(np.mean(report.samples[method].link_rates))})
            logger.info(f"rate_vs_iterations[{label}] K={g} done")
    return pd.DataFrame(rows, columns=["scenario", "iterations", "method", "mean_link_rate"])


def _sweep_point(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "n_links":
        return replace(cfg, scenario=replace(cfg.scenario, n_links=value))
    if axis == "pathloss_exponent":
        return replace(cfg, propagation=replace(cfg.propagation, pathloss_exponent=float(value)))
    return replace(cfg, propagation=replace(cfg.propagation, shadowing_std_db=float(value)))


def sensitivity_sweep(base_cfg: ExperimentConfig, axis: str, values: Sequence) -> pd.DataFrame:
    """
    One experiment per value with seed base_seed + i; DUPGD-offline is
    retrained at every point. Invalid values fail before anything runs.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES} (got {axis!r})")
    if not values:
        raise ValueError("values must not be empty")
    points = [replace(_sweep_point(base_cfg, axis, v), seed=base_cfg.seed + i) for i, v in enumerate(values)]

    rows = []
    for value, point in zip(values, points):
        report = run_experiment(point)
        for method, s in report.samples.items():
            rows.append({
                "axis": axis,
                "value": value,
                "seed": point.seed,
                "method": method,
                "mean_link_rate": float(np.mean(s.link_rates)),
                "mean_sum_rate": float(np.mean(s.sum_rates)),
            })
        logger.info(f"sweep {axis}={value} (seed {point.seed}) done")
    return pd.DataFrame(rows, columns=["axis", "value", "seed", "method", "mean_link_rate", "mean_sum_rate"])


@dataclass(frozen=True)
class IterationMatch:
    layers: int
    pgd_iterations: Optional[int]   # None: PGD never reached the DUPGD mean within max_iters
    ratio: Optional[float]
    dupgd_mean_sum_rate: float
    pgd_final_mean_sum_rate: float


def iterations_to_match(cfg: ExperimentConfig, *,
                        offline_params: Optional[UnfoldedParams] = None) -> IterationMatch:
    """Smallest PGD iteration count whose mean sum rate reaches DUPGD-offline's."""
    run_cfg = replace(cfg, methods=("pgd", "dupgd_offline"), record_pgd_trajectory=True,
                      pgd=replace(cfg.pgd, tol=None))
    report = run_experiment(run_cfg, offline_params=offline_params)
    target = float(np.mean(report.samples["dupgd_offline"].sum_rates))
    traj = report.pgd_mean_trajectory
    hits = np.flatnonzero(traj >= target)
    iterations = int(hits[0]) + 1 if hits.size else None
    layers = cfg.dupgd.n_layers
    return IterationMatch(
        layers=layers,
        pgd_iterations=iterations,
        ratio=None if iterations is None else iterations / layers,
        dupgd_mean_sum_rate=target,
        pgd_final_mean_sum_rate=float(traj[-1]),
    )


# ----------------------------- Figures -----------------------------

@dataclass
class FigureOutput:
    tables: Dict[str, pd.DataFrame]
    summary: Dict[str, Any]


def run_figure(name: str, cfg: ExperimentConfig, figure: Dict[str, Any]) -> FigureOutput:
    """
    Run one recipe figure block. The main table is stored under `name`;
    some kinds add a `<name>_summary` table.
    """
    kind = figure.get("kind")
    if kind not in FIGURE_KINDS:
        raise ValueError(f"figure.kind must be one of {FIGURE_KINDS} (got {kind!r})")
    scenarios = list(figure.get("scenarios") or [])

    if kind == "rate_vs_iterations":
        table = rate_vs_iterations(cfg, figure.get("iteration_grid", []), scenarios or None)
        match_cfg = cfg if not scenarios else apply_scenario(cfg, scenarios[0])
        match = iterations_to_match(match_cfg)
        return FigureOutput({name: table}, {"iterations_to_match": asdict(match)})

    if kind == "sensitivity":
        sweeps = figure.get("sweeps") or []
        if not sweeps:
            raise ValueError("figure.sweeps must list at least one {axis, values} entry")
        frames = []
        for name_or_none in scenarios or [None]:
            scen_cfg = cfg if name_or_none is None else apply_scenario(cfg, name_or_none)
            for sweep in sweeps:
                frame = sensitivity_sweep(scen_cfg, sweep["axis"], list(sweep["values"]))
                frame.insert(0, "scenario", name_or_none or "config")
                frames.append(frame)
        return FigureOutput({name: pd.concat(frames, ignore_index=True)},
                            {"dupgd_retrained_per_point": True})

    tables: List[pd.DataFrame] = []
    summaries: List[pd.DataFrame] = []
    reports = {}
    for scen in scenarios or [None]:
        scen_cfg = cfg if scen is None else apply_scenario(cfg, scen)
        label = scen or "config"
        report = run_experiment(scen_cfg)
        reports[label] = report.to_dict()

        if kind in ("sum_rate_cdf", "link_rate_cdf"):
            frame = cdf_frame(report, kind.replace("_cdf", ""))
        elif kind == "mean_rate_increase":
            absolute = mean_rate_increase(report)
            relative = relative_rate_increase(report)
            frame = pd.DataFrame({"method": list(absolute),
                                  "mean_rate_increase": list(absolute.values()),
                                  "relative_increase_pct": [relative[m] for m in absolute]})
        else:
            dist = power_distribution(report)
            parts = []
            for method, ps in dist.items():
                watts = [v for v, _ in ps.cdf]
                parts.append(pd.DataFrame({"method": method, "power_w": watts,
                                           "power_dbw": _dbw_array(watts),
                                           "cdf": [c for _, c in ps.cdf]}))
            frame = pd.concat(parts, ignore_index=True)
            summary = pd.DataFrame([{"method": m, "mean_power_w": ps.mean_w, "mean_power_dbw": ps.mean_dbw,
                                     "zero_power": ps.zero_power, "fraction_at_max": ps.fraction_at_max}
                                    for m, ps in dist.items()])
            summary.insert(0, "scenario", label)
            summaries.append(summary)
        frame.insert(0, "scenario", label)
        tables.append(frame)

    out = {name: pd.concat(tables, ignore_index=True)}
    if summaries:
        out[f"{name}_summary"] = pd.concat(summaries, ignore_index=True)
    return FigureOutput(out, {"reports": reports})


def _dbw_array(watts: Sequence[float]) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(watts, dtype=float))
