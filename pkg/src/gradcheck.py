# src/gradcheck.py

from __future__ import annotations

"""
Finite-difference oracles for the analytical gradients.

Three suites, each returning a GradcheckResult:
- grad_rho       vs central differences of -sum_rate   (tolerance 1e-5)
- decomposition  grad_rho vs an explicit per-link loop  (tolerance 1e-12)
- backward       unrolled-network gradients vs central differences of the
                 loss, both variants                   (tolerance 1e-4)

Instances are well conditioned on purpose: direct gains in [0.5, 1],
cross gains in [0.05, 0.5], unit noise and p_max = 1, so difference quotients
are not swamped by rounding and iterates stay away from the clamp.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from src.channel_model import ChannelMatrix
from src.objective import LN2, PowerVector, grad_rho, sum_rate
from src.unfolded_net import DELTA1_RANGE, DELTA2_RANGE, dupgd_forward, init_params, loss, loss_and_grad

logger = logging.getLogger(__name__)

GRAD_RHO_TOL = 1e-5
DECOMPOSITION_TOL = 1e-12
BACKWARD_TOL = 1e-4
INTERIOR_MARGIN = 0.1       # pre-clamp outputs kept inside [margin, p_max - margin]
KINK_MARGIN = 1e-3          # ReLU pre-activations kept this far from 0
_MAX_REDRAWS = 200


@dataclass(frozen=True)
class GradcheckResult:
    suite: str
    cases: int
    max_rel_error: float
    worst_case: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max|a - n| / max(max|a|, max|n|, floor)."""
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(n), initial=0.0)), floor)
    return float(np.max(np.abs(a - n), initial=0.0)) / scale


def numerical_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float = 1e-5,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
) -> np.ndarray:
    """
    Central differences per coordinate. Where x_i - h or x_i + h would leave
    [lower, upper], switch to the second-order one-sided stencil stepping inward.
    """
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        xi = flat[i]

        def at(v):
            flat[i] = v
            value = f(x)
            flat[i] = xi
            return value

        if lower is not None and xi - h < lower:
            out[i] = (-3.0 * at(xi) + 4.0 * at(xi + h) - at(xi + 2 * h)) / (2 * h)
        elif upper is not None and xi + h > upper:
            out[i] = (3.0 * at(xi) - 4.0 * at(xi - h) + at(xi - 2 * h)) / (2 * h)
        else:
            out[i] = (at(xi + h) - at(xi - h)) / (2 * h)
    return grad


def random_instance(rng: np.random.Generator, n_links: int) -> ChannelMatrix:
    gains = rng.uniform(0.05, 0.5, size=(n_links, n_links))
    gains[np.diag_indices(n_links)] = rng.uniform(0.5, 1.0, size=n_links)
    return ChannelMatrix(gains, 1.0)


def _loop_gradient(p: np.ndarray, H: ChannelMatrix) -> np.ndarray:
    """Gradient of -sum_rate written out link by link, no shared kernels."""
    g, s2 = H.gains, H.noise_power_w
    n = H.n_links
    eta = [sum(p[m] * g[m][k] for m in range(n) if m != k) + s2 for k in range(n)]
    out = np.zeros(n)
    for j in range(n):
        own = g[j][j] / (LN2 * (eta[j] + p[j] * g[j][j]))
        cross = 0.0
        for k in range(n):
            if k != j:
                cross += p[k] * g[k][k] * g[j][k] / (eta[k] * (eta[k] + p[k] * g[k][k]))
        out[j] = -own + cross / LN2
    return out


def _worst(results: List[tuple]) -> tuple:
    return max(results, key=lambda r: r[0]) if results else (0.0, "none")


def check_grad_rho(n_cases: int = 20, sizes: Sequence[int] = (1, 2, 5, 10), seed: int = 0,
                   h: float = 1e-6) -> GradcheckResult:
    errors = []
    for n in sizes:
        for case in range(n_cases):
            rng = np.random.default_rng([seed, n, case])
            H = random_instance(rng, n)
            p = rng.uniform(0.2, 0.8, size=n)
            numeric = numerical_gradient(lambda x: -sum_rate(x, H), p, h, 0.0, 1.0)
            errors.append((relative_error(grad_rho(p, H), numeric), f"N={n} case={case}"))
    err, where = _worst(errors)
    logger.info(f"gradcheck grad_rho: {len(errors)} cases, max rel error {err:.3e} ({where})")
    return GradcheckResult("grad_rho", len(errors), err, where, GRAD_RHO_TOL)


def check_decomposition(n_cases: int = 100, seed: int = 0) -> GradcheckResult:
    errors = []
    for case in range(n_cases):
        rng = np.random.default_rng([seed, case])
        n = int(rng.integers(1, 11))
        H = random_instance(rng, n)
        p = rng.uniform(0.0, 1.0, size=n)
        errors.append((relative_error(grad_rho(p, H), _loop_gradient(p, H), floor=1e-300),
                       f"N={n} case={case}"))
    err, where = _worst(errors)
    logger.info(f"gradcheck decomposition: {len(errors)} cases, max rel error {err:.3e} ({where})")
    return GradcheckResult("decomposition", len(errors), err, where, DECOMPOSITION_TOL)


def _is_interior(params, batch: Sequence[ChannelMatrix], p0: np.ndarray, p_max: float) -> bool:
    """No clamp or ReLU kink within reach of a finite-difference step."""
    for H in batch:
        _, cache = dupgd_forward(params, H, PowerVector(p0, p_max))
        for layer in cache.layers:
            z = layer["z"]
            if np.any(z < INTERIOR_MARGIN * p_max) or np.any(z > (1.0 - INTERIOR_MARGIN) * p_max):
                return False
            for key in ("a1", "a2"):
                if key in layer and np.any(np.abs(layer[key]) < KINK_MARGIN):
                    return False
    return True


def _interior_params(variant: str, K: int, n: int, rng: np.random.Generator, hidden_width: int,
                     batch: Sequence[ChannelMatrix], p0: np.ndarray, p_max: float):
    """
    Random parameters whose forward pass on `batch` stays off every kink.
    MLP output weights keep half their initial scale so the gradient still
    reaches the first layers of a 5-layer stack.
    """
    for _ in range(_MAX_REDRAWS):
        params = init_params(K, variant, 0.1, rng, n_links=n, hidden_width=hidden_width, p_max_w=p_max)
        params.delta1[:] = -rng.uniform(0.005, 0.02, size=K)
        params.delta2[:] = rng.uniform(0.005, 0.02, size=K)
        if params.mlp_weights is not None:
            for layer in params.mlp_weights:
                layer["W3"] *= 0.5
                layer["b3"] = 0.5 + 0.05 * rng.uniform(-1.0, 1.0, size=n)
        if _is_interior(params, batch, p0, p_max):
            return params
    raise RuntimeError(f"no interior {variant} parameters for K={K} N={n} after {_MAX_REDRAWS} draws")


def check_backward(
    variants: Sequence[str] = ("scalar_step", "mlp_layer"),
    layer_counts: Sequence[int] = (1, 3, 5),
    link_counts: Sequence[int] = (2, 4),
    n_cases: int = 2,
    seed: int = 0,
    h: float = 1e-5,
    batch_size: int = 2,
    hidden_width: int = 8,
    p_max: float = 1.0,
) -> GradcheckResult:
    """
    One relative error per case, over all trainables at once: the error is
    normalised by the largest gradient entry of the whole network, so
    parameters with near-zero gradients are judged on the network's scale.
    """
    errors = []
    for v_idx, variant in enumerate(variants):
        for K in layer_counts:
            for n in link_counts:
                for case in range(n_cases):
                    rng = np.random.default_rng([seed, v_idx, K, n, case])
                    batch = [random_instance(rng, n) for _ in range(batch_size)]
                    p0 = np.full(n, 0.5 * p_max)
                    params = _interior_params(variant, K, n, rng, hidden_width, batch, p0, p_max)
                    _, grads = loss_and_grad(params, batch, p0, p_max)

                    analytic, numeric = [], []
                    for key, value in params.trainables().items():
                        bounds = {"delta1": DELTA1_RANGE, "delta2": DELTA2_RANGE}.get(key, (None, None))

                        def f(x, key=key):
                            return loss(params.with_trainables({**params.trainables(), key: x}),
                                        batch, p0, p_max)

                        analytic.append(grads[key].ravel())
                        numeric.append(numerical_gradient(f, value, h, *bounds).ravel())
                    err = relative_error(np.concatenate(analytic), np.concatenate(numeric))
                    errors.append((err, f"{variant} K={K} N={n} case={case}"))
    err, where = _worst(errors)
    logger.info(f"gradcheck backward: {len(errors)} cases, max rel error {err:.3e} ({where})")
    return GradcheckResult("backward", len(errors), err, where, BACKWARD_TOL)


def run_all(seed: int = 0) -> List[GradcheckResult]:
    return [check_grad_rho(seed=seed), check_decomposition(seed=seed), check_backward(seed=seed)]
