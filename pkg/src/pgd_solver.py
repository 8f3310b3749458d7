# src/pgd_solver.py

from __future__ import annotations

"""
Iterative projected gradient descent with a fixed step, plus a brute-force
grid search used as a small-N verification oracle.

Each iteration is  p <- clip(p - s * (d1*Psi + d2*Phi), 0, p_max)  with
s = p_max^2 and (d1, d2) = (-step, +step) / s, i.e. p - step * grad(rho)
= p + step*Psi - step*Phi up to rounding. The deltas live in p / p_max
units and the arithmetic order is the one the unfolded network uses, so an
untrained network reproduces this solver exactly.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.channel_model import ChannelMatrix
from src.objective import (
    NonFiniteError,
    PowerVector,
    clip_box,
    decompose,
    pgd_deltas,
    step_scale,
    step_update,
    sum_rate_array,
)

logger = logging.getLogger(__name__)

INIT_RULES = ("max_power", "uniform_random", "constant")
GRID_MAX_LINKS = 3
_GRID_CHUNK = 1 << 16


@dataclass(frozen=True)
class PgdConfig:
    step_size: float = 0.1
    max_iters: int = 1000
    init: str = "max_power"             # max_power | uniform_random | constant
    init_value: Optional[float] = None  # watts, for init="constant"
    record_trajectory: bool = False
    record_iterates: bool = False       # keep every p_k (memory grows with max_iters)
    tol: Optional[float] = None         # relative-improvement stop; None = run all iterations

    def __post_init__(self):
        if not (0.0 < self.step_size < 1.0):
            raise ValueError(f"step_size must be in (0, 1) (got {self.step_size})")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer (got {self.max_iters})")
        if self.init not in INIT_RULES:
            raise ValueError(f"init must be one of {INIT_RULES} (got {self.init!r})")
        if self.init == "constant" and self.init_value is None:
            raise ValueError("init_value is required when init='constant'")
        if self.tol is not None and self.tol <= 0:
            raise ValueError(f"tol must be > 0 when set (got {self.tol})")


@dataclass(frozen=True, eq=False)
class SolveResult:
    p_final: PowerVector
    sum_rate_final: float
    trajectory: Optional[List[float]]
    iterations_run: int
    non_monotone_steps: int = 0
    iterates: Optional[List[np.ndarray]] = None


def initial_powers(n_links: int, cfg: PgdConfig, p_max_w: float,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if cfg.init == "max_power":
        return np.full(n_links, float(p_max_w))
    if cfg.init == "uniform_random":
        if rng is None:
            raise ValueError("init='uniform_random' needs an rng")
        return rng.uniform(0.0, p_max_w, size=n_links)
    if not (0.0 <= cfg.init_value <= p_max_w):
        raise ValueError(f"init_value must lie in [0, {p_max_w}] (got {cfg.init_value})")
    return np.full(n_links, float(cfg.init_value))


def run_pgd(
    H: ChannelMatrix,
    cfg: PgdConfig,
    p_max_w: float,
    rng: Optional[np.random.Generator] = None,
    *,
    p0: Optional[np.ndarray] = None,
) -> SolveResult:
    """
    Algorithm: start feasible, then K times take a fixed gradient step on the
    negative sum rate and clamp back into [0, p_max]. No early stop unless
    cfg.tol is set. Per-step decreases of the sum rate are counted and logged,
    never treated as errors (fixed-step PGD is not monotone).
    """
    if p_max_w <= 0:
        raise ValueError(f"p_max_w must be > 0 (got {p_max_w})")
    gains, noise = H.gains, H.noise_power_w
    p = initial_powers(H.n_links, cfg, p_max_w, rng) if p0 is None else np.array(p0, dtype=float)
    p = clip_box(p, p_max_w)

    d1, d2 = pgd_deltas(cfg.step_size, p_max_w)
    scale = step_scale(p_max_w)
    trajectory: Optional[List[float]] = [] if cfg.record_trajectory else None
    iterates: Optional[List[np.ndarray]] = [p.copy()] if cfg.record_iterates else None
    prev_rate = float(sum_rate_array(p, gains, noise))
    non_monotone = 0
    iterations = 0

    for k in range(1, cfg.max_iters + 1):
        psi, phi, _, _, _ = decompose(p, gains, noise)
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(phi))):
            raise NonFiniteError(f"non-finite gradient at iteration {k}")
        p = clip_box(step_update(p, psi, phi, d1, d2, scale), p_max_w)
        rate = float(sum_rate_array(p, gains, noise))
        if not np.isfinite(rate):
            raise NonFiniteError(f"non-finite sum rate at iteration {k}")
        iterations = k
        if iterates is not None:
            iterates.append(p.copy())
        if trajectory is not None:
            trajectory.append(rate)
        if rate < prev_rate:
            non_monotone += 1
        if cfg.tol is not None and abs(rate - prev_rate) <= cfg.tol * max(abs(prev_rate), 1e-12):
            prev_rate = rate
            break
        prev_rate = rate

    if non_monotone:
        logger.debug(f"PGD: {non_monotone}/{iterations} steps decreased the sum rate")
    return SolveResult(
        p_final=PowerVector(p, p_max_w),
        sum_rate_final=prev_rate,
        trajectory=trajectory,
        iterations_run=iterations,
        non_monotone_steps=non_monotone,
        iterates=iterates,
    )


def brute_force_grid(H: ChannelMatrix, p_max_w: float, grid_points: int) -> Tuple[PowerVector, float]:
    """
    Exhaustive search over {0, ..., p_max}^N with grid_points levels per axis.
    Only for N <= 3; ties resolve to the first point in row-major order.
    """
    n = H.n_links
    if n > GRID_MAX_LINKS:
        raise ValueError(f"brute_force_grid supports at most {GRID_MAX_LINKS} links (got {n})")
    if int(grid_points) != grid_points or grid_points < 2:
        raise ValueError(f"grid_points must be an integer >= 2 (got {grid_points})")

    levels = np.linspace(0.0, p_max_w, int(grid_points))
    total = int(grid_points) ** n
    best_val, best_idx = -np.inf, 0
    for start in range(0, total, _GRID_CHUNK):
        flat = np.arange(start, min(start + _GRID_CHUNK, total))
        idx = np.stack(np.unravel_index(flat, (int(grid_points),) * n), axis=-1)
        rates = sum_rate_array(levels[idx], H.gains, H.noise_power_w)
        j = int(np.argmax(rates))
        if rates[j] > best_val:
            best_val, best_idx = float(rates[j]), int(flat[j])
    best = levels[np.array(np.unravel_index(best_idx, (int(grid_points),) * n))]
    return PowerVector(best, p_max_w), best_val


@dataclass(frozen=True, eq=False)
class GridCheck:
    """PGD result next to the grid optimum of the same channel."""
    pgd_rate: float
    grid_rate: float
    grid_p: PowerVector
    tol: float

    @property
    def gap(self) -> float:
        return self.grid_rate - self.pgd_rate

    @property
    def local_optimum(self) -> bool:
        return self.gap > self.tol


def check_against_grid(H: ChannelMatrix, result: SolveResult, p_max_w: float,
                       grid_points: int = 201, tol: float = 0.05) -> GridCheck:
    grid_p, grid_rate = brute_force_grid(H, p_max_w, grid_points)
    return GridCheck(result.sum_rate_final, grid_rate, grid_p, tol)


def grid_survey(
    channels: Sequence[ChannelMatrix],
    cfg: PgdConfig,
    p_max_w: float,
    grid_points: int = 201,
    tol: float = 0.05,
) -> List[GridCheck]:
    """
    Run PGD on every channel and compare with the grid optimum. Instances
    where PGD stops more than tol below the grid are local-optimum cases;
    each one is logged with its gap and both allocations.
    """
    checks = []
    for i, H in enumerate(channels):
        result = run_pgd(H, cfg, p_max_w)
        check = check_against_grid(H, result, p_max_w, grid_points, tol)
        if check.local_optimum:
            logger.info(f"PGD local optimum on instance {i}: {check.pgd_rate:.4f} vs grid "
                        f"{check.grid_rate:.4f} bps/Hz (gap {check.gap:.4f}), "
                        f"p={np.round(result.p_final.p, 4).tolist()} grid p={check.grid_p.p.tolist()}")
        checks.append(check)
    stuck = sum(c.local_optimum for c in checks)
    logger.info(f"grid survey: {len(checks) - stuck}/{len(checks)} within {tol} bps/Hz, {stuck} local optima")
    return checks
