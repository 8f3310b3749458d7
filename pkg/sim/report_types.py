"""JSON artifact bodies; sim.artifacts.write_json adds the `meta` block."""
from typing import Any, Dict, List, Optional, TypedDict

class ArtifactMeta(TypedDict):
    tool: str
    version: str
    seed: int
    config: Dict[str, Any]

class MethodSummary(TypedDict):
    method: str
    n_realizations: int
    mean_sum_rate: float
    mean_link_rate: float
    mean_power_w: float
    mean_power_dbw: Optional[float]
    zero_power: bool

class ReportDoc(TypedDict):
    methods: List[str]
    n_realizations: int
    n_links: int
    summary: List[MethodSummary]
    channel_hashes: List[str]
    pgd_mean_trajectory: Optional[List[float]]
    dupgd_offline_trained_per_config: bool

class PgdResultDoc(TypedDict):
    channel_digest: str
    p_final_w: List[float]
    sum_rate_final: float
    iterations_run: int
    non_monotone_steps: int

class GradcheckRow(TypedDict):
    suite: str
    cases: int
    max_rel_error: float
    tolerance: float
    passed: bool
    worst_case: str

class GradcheckDoc(TypedDict):
    results: List[GradcheckRow]

class ParamsDoc(TypedDict):
    schema: str
    variant: str
    n_layers: int
    delta1: List[float]
    delta2: List[float]
    mlp_weights: Optional[List[Dict[str, List[Any]]]]
    train_config: Dict[str, Any]

class FigureDoc(TypedDict):
    figure: str
    kind: str
    summary: Dict[str, Any]
