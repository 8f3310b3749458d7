"""
Configuration surface: built-in defaults < YAML file (or recipe) <
DUPGD_OUTPUT_DIR < explicit flags / --set overrides.

Sections mirror the domain dataclasses (scenario, propagation, pgd, train,
dupgd) plus `experiment`, `run` and, in recipes only, a free-form `figure`
block. Every error is a ConfigError whose message starts with the dotted key.
"""
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import yaml
from dotenv import load_dotenv

from src.channel_model import PropagationParams, ScenarioSpec
from src.experiments import SCENARIO_PRESETS, DupgdConfig, ExperimentConfig, apply_scenario
from src.pgd_solver import PgdConfig
from src.unfolded_net import TrainConfig

# Load .env if present
load_dotenv()

ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = ROOT / "config"
RECIPE_DIR = CONFIG_DIR / "recipes"
DEFAULT_OUTPUT_DIR = "results"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

DATACLASS_SECTIONS = {
    "scenario": ScenarioSpec,
    "propagation": PropagationParams,
    "pgd": PgdConfig,
    "train": TrainConfig,
    "dupgd": DupgdConfig,
}
# fields whose default is None but which take a number when set
OPTIONAL_NUMBERS = {"scenario.max_pair_distance_m", "pgd.init_value", "pgd.tol"}
# seed and progress live in `run` and are pushed into the sections that carry them
DERIVED_FIELDS = {"train.seed", "train.progress"}


class ConfigError(ValueError):
    """Unknown key, type mismatch or constraint violation in the config."""


def get_env(key: str, default=None):
    return os.getenv(key, default)


@dataclass(frozen=True)
class CliConfig:
    experiment: ExperimentConfig
    output_dir: Path
    seed: int
    workers: int
    progress: bool = False
    log_level: str = "INFO"
    figure: Optional[Dict[str, Any]] = None
    source: Optional[str] = None

    def echo(self) -> Dict[str, Any]:
        """Effective config as written into artifacts (machine-specific knobs left out)."""
        doc = self.experiment.to_dict()
        for key in ("workers", "progress"):
            doc.pop(key, None)
        doc["train"].pop("progress", None)
        if self.figure is not None:
            doc["figure"] = self.figure
        return doc


# ----------------------------- Defaults -----------------------------

def _section_defaults(cls) -> Dict[str, Any]:
    out = {}
    for f in fields(cls):
        value = getattr(cls(), f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def default_tree() -> Dict[str, Any]:
    tree: Dict[str, Any] = {name: _section_defaults(cls) for name, cls in DATACLASS_SECTIONS.items()}
    for key in DERIVED_FIELDS:
        section, name = key.split(".")
        tree[section].pop(name)
    base = ExperimentConfig()
    tree["experiment"] = {
        "methods": list(base.methods),
        "n_realizations": base.n_realizations,
        "p_max_w": base.p_max_w,
        "record_pgd_trajectory": base.record_pgd_trajectory,
        "scenario_preset": None,
    }
    tree["run"] = {
        "seed": base.seed,
        "output_dir": DEFAULT_OUTPUT_DIR,
        "workers": os.cpu_count() or 1,
        "progress": False,
        "log_level": "INFO",
    }
    tree["figure"] = None
    return tree


# ----------------------------- Merging -----------------------------

def _merge(base: Dict[str, Any], override: Mapping[str, Any], path: str = "") -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        dotted = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{dotted}: unknown key")
        if key == "figure" and not path:
            if value is not None and not isinstance(value, Mapping):
                raise ConfigError("figure: expected a mapping")
            out[key] = dict(value) if value is not None else None
        elif isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{dotted}: expected a mapping (got {type(value).__name__})")
            out[key] = _merge(base[key], value, f"{dotted}.")
        else:
            out[key] = value
    return out


def parse_overrides(items: Iterable[str]) -> Dict[str, Any]:
    """['pgd.step_size=0.05', ...] -> nested dict; values are parsed as YAML scalars."""
    tree: Dict[str, Any] = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key.path=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"{item}: empty key")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"{key}: cannot parse value {raw!r} ({e})") from e
        node = tree
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: conflicts with an earlier override")
        node[parts[-1]] = value
    return tree


def load_yaml(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})") from e
    if doc is None:
        return {}
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return dict(doc)


def recipe_path(name: str) -> Path:
    path = RECIPE_DIR / f"{name}.yml"
    if not path.is_file():
        known = sorted(p.stem for p in RECIPE_DIR.glob("*.yml"))
        raise ConfigError(f"recipe {name!r} not found (available: {', '.join(known)})")
    return path


# ----------------------------- Typing -----------------------------

def _coerce(key: str, value: Any, default: Any) -> Any:
    if key in OPTIONAL_NUMBERS:
        if value is None:
            return None
        return _coerce(key, value, 0.0)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false (got {value!r})")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer (got {value!r})")
        return value
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number (got {value!r})")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number (got {value!r})") from None
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string (got {value!r})")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list (got {value!r})")
        return tuple(value)
    return value


def _build(name: str, cls, values: Dict[str, Any], **extra):
    defaults = _section_defaults(cls)
    kwargs = {k: _coerce(f"{name}.{k}", v, defaults[k]) for k, v in values.items()}
    if name == "scenario":
        kwargs["area_m"] = tuple(_coerce(f"scenario.area_m[{i}]", a, 0.0) for i, a in enumerate(kwargs["area_m"]))
    try:
        return cls(**kwargs, **extra)
    except ValueError as e:
        raise ConfigError(f"{name}.{e}") from e


def build_config(tree: Dict[str, Any], source: Optional[str] = None) -> CliConfig:
    run = tree["run"]
    seed = _coerce("run.seed", run["seed"], 0)
    workers = _coerce("run.workers", run["workers"], 0)
    if workers < 1:
        raise ConfigError(f"run.workers: must be >= 1 (got {workers})")
    progress = _coerce("run.progress", run["progress"], False)
    log_level = str(_coerce("run.log_level", run["log_level"], "")).upper()
    if log_level not in LOG_LEVELS:
        raise ConfigError(f"run.log_level: expected one of {LOG_LEVELS} (got {run['log_level']!r})")
    output_dir = _coerce("run.output_dir", run["output_dir"], "")

    scenario = _build("scenario", ScenarioSpec, tree["scenario"])
    propagation = _build("propagation", PropagationParams, tree["propagation"])
    pgd = _build("pgd", PgdConfig, tree["pgd"])
    train = _build("train", TrainConfig, tree["train"], seed=seed, progress=progress)
    dupgd = _build("dupgd", DupgdConfig, tree["dupgd"])

    exp = tree["experiment"]
    methods = _coerce("experiment.methods", exp["methods"], [])
    preset = exp["scenario_preset"]
    if preset is not None and preset not in SCENARIO_PRESETS:
        raise ConfigError(f"experiment.scenario_preset: expected one of {sorted(SCENARIO_PRESETS)} (got {preset!r})")
    try:
        experiment = ExperimentConfig(
            scenario=scenario,
            propagation=propagation,
            methods=methods,
            n_realizations=_coerce("experiment.n_realizations", exp["n_realizations"], 0),
            pgd=pgd,
            train=train,
            dupgd=dupgd,
            p_max_w=_coerce("experiment.p_max_w", exp["p_max_w"], 0.0),
            seed=seed,
            workers=workers,
            record_pgd_trajectory=_coerce("experiment.record_pgd_trajectory", exp["record_pgd_trajectory"], False),
            progress=progress,
        )
        if preset is not None:
            experiment = apply_scenario(experiment, preset)
    except ValueError as e:
        raise ConfigError(f"experiment.{e}") from e

    return CliConfig(
        experiment=experiment,
        output_dir=Path(output_dir),
        seed=seed,
        workers=workers,
        progress=progress,
        log_level=log_level,
        figure=tree.get("figure"),
        source=source,
    )


def parse_config(
    path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    *,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    workers: Optional[int] = None,
    scenario: Optional[str] = None,
) -> CliConfig:
    """Merge defaults, file, environment and flags; validate into a CliConfig."""
    tree = default_tree()
    if path is not None:
        tree = _merge(tree, load_yaml(path))

    env_dir = get_env("DUPGD_OUTPUT_DIR")
    if env_dir:
        tree["run"]["output_dir"] = env_dir

    tree = _merge(tree, parse_overrides(overrides))
    if seed is not None:
        tree["run"]["seed"] = seed
    if output_dir is not None:
        tree["run"]["output_dir"] = output_dir
    if workers is not None:
        tree["run"]["workers"] = workers
    if scenario is not None:
        tree["experiment"]["scenario_preset"] = scenario
    return build_config(tree, None if path is None else str(path))
