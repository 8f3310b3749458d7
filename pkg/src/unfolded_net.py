# src/unfolded_net.py

from __future__ import annotations

"""
Deep-unfolded PGD (DUPGD): K projected-update layers with learned steps.

What this module does, in plain language:
- scalar_step layers compute  p <- clip(p - s * (d1_k * Psi(p) + d2_k * Phi(p)))
  with d1_k in [-1, 0], d2_k in [0, 1] and s = p_max^2, i.e. a descent step
  on rho = -sum_rate taken in p / p_max units. Initialized at
  (-lambda, +lambda) / s the network is exactly lambda-step PGD truncated
  at K iterations.
- mlp_layer layers replace the two scalars by a small dense network per layer
  (3N -> width -> width -> N, ReLU hidden units) whose output is clamped
  into [0, p_max].
- The loss is the negative batch-mean sum rate. Its gradient is computed by
  hand-written reverse mode through every layer, including Psi/Phi's
  dependence on p and the clamp (derivative 1 on [0, p_max], 0 outside).
- Adam with bias correction updates the parameters; deltas are clamped back
  into their ranges after every step.
- Offline training: many batches of freshly drawn deployments and channels.
  Online training: a few steps on one realization, keeping the best
  parameters seen.
"""

import logging
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.channel_model import (
    ChannelMatrix,
    PropagationParams,
    ScenarioSpec,
    generate_deployment,
    sample_batch,
    stack_gains,
)
from src.objective import (
    NonFiniteError,
    PowerVector,
    clip_box,
    decompose,
    decompose_vjp,
    pgd_deltas,
    step_scale,
    step_update,
    sum_rate_array,
)

logger = logging.getLogger(__name__)

VARIANTS = ("scalar_step", "mlp_layer")
ONLINE_SCHEDULES = ("whole_unroll", "layerwise")
DELTA1_RANGE = (-1.0, 0.0)
DELTA2_RANGE = (0.0, 1.0)
PARAMS_SCHEMA = "dupgd.params/v1"
_MLP_KEYS = ("W1", "b1", "W2", "b2", "W3", "b3")

P0Rule = Union[str, np.ndarray, PowerVector]


# ----------------------------- Parameters -----------------------------

@dataclass(eq=False)
class UnfoldedParams:
    n_layers: int
    variant: str
    delta1: np.ndarray
    delta2: np.ndarray
    mlp_weights: Optional[List[Dict[str, np.ndarray]]] = None

    def __post_init__(self):
        if int(self.n_layers) != self.n_layers or self.n_layers < 1:
            raise ValueError(f"n_layers must be a positive integer (got {self.n_layers})")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS} (got {self.variant!r})")
        self.delta1 = np.array(self.delta1, dtype=float).reshape(-1)
        self.delta2 = np.array(self.delta2, dtype=float).reshape(-1)
        if self.delta1.shape != (self.n_layers,) or self.delta2.shape != (self.n_layers,):
            raise ValueError(f"delta1/delta2 must have length n_layers={self.n_layers}")
        if (self.mlp_weights is not None) != (self.variant == "mlp_layer"):
            raise ValueError("mlp_weights must be present exactly when variant='mlp_layer'")
        if self.mlp_weights is not None and len(self.mlp_weights) != self.n_layers:
            raise ValueError(f"expected {self.n_layers} MLP layers, got {len(self.mlp_weights)}")
        self.clamp_deltas()

    def clamp_deltas(self) -> None:
        np.clip(self.delta1, *DELTA1_RANGE, out=self.delta1)
        np.clip(self.delta2, *DELTA2_RANGE, out=self.delta2)

    @property
    def hidden_width(self) -> Optional[int]:
        return None if self.mlp_weights is None else int(self.mlp_weights[0]["W1"].shape[1])

    @property
    def n_links(self) -> Optional[int]:
        return None if self.mlp_weights is None else int(self.mlp_weights[0]["W3"].shape[1])

    def trainables(self) -> Dict[str, np.ndarray]:
        """Name -> array view of everything the optimizer updates."""
        if self.variant == "scalar_step":
            return {"delta1": self.delta1, "delta2": self.delta2}
        return {f"mlp.{k}.{name}": layer[name]
                for k, layer in enumerate(self.mlp_weights) for name in _MLP_KEYS}

    def with_trainables(self, values: Dict[str, np.ndarray]) -> "UnfoldedParams":
        out = self.copy()
        if out.variant == "scalar_step":
            out.delta1 = np.array(values["delta1"], dtype=float)
            out.delta2 = np.array(values["delta2"], dtype=float)
        else:
            for key, arr in values.items():
                _, k, name = key.split(".")
                out.mlp_weights[int(k)][name] = np.array(arr, dtype=float)
        out.clamp_deltas()
        return out

    def copy(self) -> "UnfoldedParams":
        mlp = None if self.mlp_weights is None else [
            {name: arr.copy() for name, arr in layer.items()} for layer in self.mlp_weights
        ]
        return UnfoldedParams(self.n_layers, self.variant, self.delta1.copy(), self.delta2.copy(), mlp)

    def layer_of(self, key: str) -> Optional[int]:
        """Layer index a trainable belongs to (None for the whole-vector delta arrays)."""
        return int(key.split(".")[1]) if key.startswith("mlp.") else None

    def to_dict(self, train_config: Optional["TrainConfig"] = None) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "schema": PARAMS_SCHEMA,
            "variant": self.variant,
            "n_layers": self.n_layers,
            "delta1": self.delta1.tolist(),
            "delta2": self.delta2.tolist(),
            "mlp_weights": None if self.mlp_weights is None else [
                {name: layer[name].tolist() for name in _MLP_KEYS} for layer in self.mlp_weights
            ],
        }
        if train_config is not None:
            doc["train_config"] = train_config.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "UnfoldedParams":
        if doc.get("schema") != PARAMS_SCHEMA:
            raise ValueError(f"unsupported params schema {doc.get('schema')!r}")
        mlp = doc.get("mlp_weights")
        if mlp is not None:
            mlp = [{name: np.asarray(layer[name], dtype=float) for name in _MLP_KEYS} for layer in mlp]
        return cls(int(doc["n_layers"]), doc["variant"], doc["delta1"], doc["delta2"], mlp)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    optimizer_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_batches: int = 2000
    online_steps: int = 20
    online_lr: float = 1e-2
    online_schedule: str = "whole_unroll"   # whole_unroll | layerwise
    init_step_size: float = 0.1
    redraw_deployments: bool = True
    record_snapshots: bool = False
    log_every: int = 100
    progress: bool = False
    seed: int = 2024

    def __post_init__(self):
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer (got {self.batch_size})")
        for name in ("n_batches", "online_steps"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                raise ValueError(f"{name} must be a non-negative integer (got {getattr(self, name)})")
        for name in ("optimizer_lr", "online_lr", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1) (got {getattr(self, name)})")
        if not 0.0 <= self.init_step_size <= 1.0:
            raise ValueError(f"init_step_size must be in [0, 1] (got {self.init_step_size})")
        if self.online_schedule not in ONLINE_SCHEDULES:
            raise ValueError(f"online_schedule must be one of {ONLINE_SCHEDULES} (got {self.online_schedule!r})")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1 (got {self.log_every})")

    def to_dict(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class AdamState:
    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: UnfoldedParams) -> "AdamState":
        tr = params.trainables()
        return cls({k: np.zeros_like(v) for k, v in tr.items()},
                   {k: np.zeros_like(v) for k, v in tr.items()}, 0)


@dataclass
class TrainHistory:
    losses: List[float] = field(default_factory=list)
    snapshots: Optional[List[Dict[str, Any]]] = None
    wall_clock_s: float = 0.0
    started_at: str = ""
    adam: Dict[str, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"step": np.arange(1, len(self.losses) + 1), "loss": self.losses})


@dataclass(eq=False)
class LayerCache:
    """Per-layer intermediates of one forward pass, consumed by backward."""
    layers: List[Dict[str, np.ndarray]]
    p_max_w: float


# ----------------------------- Initialization -----------------------------

def init_params(
    K: int,
    variant: str,
    init_step_size: float,
    rng: Optional[np.random.Generator] = None,
    *,
    n_links: Optional[int] = None,
    hidden_width: int = 64,
    p_max_w: float = 1.0,
) -> UnfoldedParams:
    """
    scalar_step: every layer starts at pgd_deltas(init_step_size, p_max_w),
    so the untrained network is init_step_size PGD at that p_max.
    mlp_layer: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    weights and biases; needs n_links (input width 3N).
    """
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer (got {K})")
    K = int(K)
    d1, d2 = pgd_deltas(init_step_size, p_max_w)
    delta1 = np.full(K, d1)
    delta2 = np.full(K, d2)
    if variant == "scalar_step":
        return UnfoldedParams(K, variant, delta1, delta2)
    if variant != "mlp_layer":
        raise ValueError(f"variant must be one of {VARIANTS} (got {variant!r})")
    if n_links is None or n_links < 1:
        raise ValueError("mlp_layer needs n_links >= 1")
    if hidden_width < 1:
        raise ValueError(f"hidden_width must be >= 1 (got {hidden_width})")
    if rng is None:
        raise ValueError("mlp_layer initialization needs an rng")

    shapes = [(3 * n_links, hidden_width), (hidden_width, hidden_width), (hidden_width, n_links)]
    layers = []
    for _ in range(K):
        layer = {}
        for i, (fan_in, fan_out) in enumerate(shapes, start=1):
            bound = 1.0 / np.sqrt(fan_in)
            layer[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layer[f"b{i}"] = rng.uniform(-bound, bound, size=fan_out)
        layers.append(layer)
    return UnfoldedParams(K, variant, delta1, delta2, layers)


def progress_enabled(requested: bool) -> bool:
    """Progress bars only when asked for and stderr is a terminal."""
    return bool(requested) and sys.stderr.isatty()


def initial_power_array(p0: P0Rule, n_links: int, p_max_w: float) -> np.ndarray:
    if isinstance(p0, PowerVector):
        return np.array(p0.p)
    if isinstance(p0, str):
        if p0 == "max_power":
            return np.full(n_links, float(p_max_w))
        raise ValueError(f"unknown p0 rule {p0!r}")
    arr = np.asarray(p0, dtype=float)
    if arr.shape[-1] != n_links or np.any(arr < 0) or np.any(arr > p_max_w):
        raise ValueError(f"p0 must be a feasible length-{n_links} power vector")
    return arr


# ----------------------------- Forward -----------------------------

def _mlp_features(p, psi, phi, p_max_w):
    return np.concatenate([p / p_max_w, np.arcsinh(p_max_w * psi), np.arcsinh(p_max_w * phi)], axis=-1)


def _forward_arrays(params: UnfoldedParams, p: np.ndarray, gains: np.ndarray, noise,
                    p_max_w: float, n_active: Optional[int] = None) -> Tuple[np.ndarray, LayerCache]:
    """Shape-agnostic forward: p is (N,) with gains (N, N) or (B, N) with (B, N, N)."""
    layers = []
    for k in range(params.n_layers if n_active is None else n_active):
        psi, phi, gamma, eta, w = decompose(p, gains, noise)
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(phi))):
            raise NonFiniteError(f"non-finite Psi/Phi at layer {k + 1}")
        cache = {"p": p, "psi": psi, "phi": phi, "gamma": gamma, "eta": eta, "w": w}
        if params.variant == "scalar_step":
            z = step_update(p, psi, phi, params.delta1[k], params.delta2[k], step_scale(p_max_w))
        else:
            wts = params.mlp_weights[k]
            x = _mlp_features(p, psi, phi, p_max_w)
            a1 = x @ wts["W1"] + wts["b1"]
            h1 = np.maximum(a1, 0.0)
            a2 = h1 @ wts["W2"] + wts["b2"]
            h2 = np.maximum(a2, 0.0)
            z = p_max_w * (h2 @ wts["W3"] + wts["b3"])
            cache.update(x=x, a1=a1, h1=h1, a2=a2, h2=h2)
        cache["z"] = z
        p = clip_box(z, p_max_w)
        layers.append(cache)
    return p, LayerCache(layers, p_max_w)


def dupgd_forward(params: UnfoldedParams, H: ChannelMatrix, p0: PowerVector) -> Tuple[PowerVector, LayerCache]:
    """Run the K layers on one channel; returns the allocation and the layer cache."""
    if p0.n_links != H.n_links:
        raise ValueError(f"p0 has {p0.n_links} links, channel has {H.n_links}")
    if params.n_links is not None and params.n_links != H.n_links:
        raise ValueError(f"MLP layers were built for {params.n_links} links, channel has {H.n_links}")
    p, cache = _forward_arrays(params, np.array(p0.p), H.gains, H.noise_power_w, p0.p_max_w)
    return PowerVector(p, p0.p_max_w), cache


# ----------------------------- Loss and backward -----------------------------

def _batch_arrays(batch: Sequence[ChannelMatrix], p0: P0Rule, p_max_w: float):
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    gains, noise = stack_gains(list(batch))
    n = gains.shape[-1]
    p = np.broadcast_to(initial_power_array(p0, n, p_max_w), (len(batch), n)).copy()
    return p, gains, noise


def loss_and_grad(
    params: UnfoldedParams,
    batch: Sequence[ChannelMatrix],
    p0: P0Rule = "max_power",
    p_max_w: float = 10.0,
    *,
    n_active: Optional[int] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss -(1/B) sum_b sum_rate and its exact gradient w.r.t. params.trainables()."""
    p, gains, noise = _batch_arrays(batch, p0, p_max_w)
    B = p.shape[0]
    p_out, cache = _forward_arrays(params, p, gains, noise, p_max_w, n_active)
    rates = sum_rate_array(p_out, gains, noise)
    if not np.all(np.isfinite(rates)):
        raise NonFiniteError("non-finite sum rate in loss")
    loss_value = -float(np.mean(rates))

    # d(-mean sum_rate)/dp = grad(rho) / B = (Phi - Psi) / B
    psi, phi, _, _, _ = decompose(p_out, gains, noise)
    g_p = (phi - psi) / B

    grads = {k: np.zeros_like(v) for k, v in params.trainables().items()}
    for k in reversed(range(len(cache.layers))):
        c = cache.layers[k]
        z = c["z"]
        g_z = g_p * ((z >= 0.0) & (z <= p_max_w))
        if params.variant == "scalar_step":
            # z = p - s * (d1 * psi + d2 * phi)
            s = step_scale(p_max_w)
            grads["delta1"][k] = -s * np.sum(g_z * c["psi"])
            grads["delta2"][k] = -s * np.sum(g_z * c["phi"])
            g_psi = -s * params.delta1[k] * g_z
            g_phi = -s * params.delta2[k] * g_z
            g_p = g_z
        else:
            wts = params.mlp_weights[k]
            n = p.shape[-1]
            g_y = p_max_w * g_z
            grads[f"mlp.{k}.W3"] = c["h2"].T @ g_y
            grads[f"mlp.{k}.b3"] = g_y.sum(axis=0)
            g_a2 = (g_y @ wts["W3"].T) * (c["a2"] > 0.0)
            grads[f"mlp.{k}.W2"] = c["h1"].T @ g_a2
            grads[f"mlp.{k}.b2"] = g_a2.sum(axis=0)
            g_a1 = (g_a2 @ wts["W2"].T) * (c["a1"] > 0.0)
            grads[f"mlp.{k}.W1"] = c["x"].T @ g_a1
            grads[f"mlp.{k}.b1"] = g_a1.sum(axis=0)
            g_x = g_a1 @ wts["W1"].T
            s_psi, s_phi = p_max_w * c["psi"], p_max_w * c["phi"]
            g_psi = g_x[:, n:2 * n] * p_max_w / np.sqrt(1.0 + s_psi * s_psi)
            g_phi = g_x[:, 2 * n:] * p_max_w / np.sqrt(1.0 + s_phi * s_phi)
            g_p = g_x[:, :n] / p_max_w
        g_p = g_p + decompose_vjp(g_psi, g_phi, c["p"], gains, c["gamma"], c["eta"], c["w"])

    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {key}")
    return loss_value, grads


def loss(params: UnfoldedParams, batch: Sequence[ChannelMatrix],
         p0: P0Rule = "max_power", p_max_w: float = 10.0) -> float:
    """-(1/N_B) * sum_b sum_rate(dupgd_forward(params, H_b, p0), H_b)."""
    p, gains, noise = _batch_arrays(batch, p0, p_max_w)
    p_out, _ = _forward_arrays(params, p, gains, noise, p_max_w)
    return -float(np.mean(sum_rate_array(p_out, gains, noise)))


def backward(params: UnfoldedParams, batch: Sequence[ChannelMatrix],
             p0: P0Rule = "max_power", p_max_w: float = 10.0) -> Dict[str, np.ndarray]:
    return loss_and_grad(params, batch, p0, p_max_w)[1]


# ----------------------------- Optimizer -----------------------------

def adam_step(
    params: UnfoldedParams,
    grads: Dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
    *,
    lr: Optional[float] = None,
) -> Tuple[UnfoldedParams, AdamState]:
    """Bias-corrected Adam on params.trainables(); deltas clamped afterwards."""
    current = params.trainables()
    if set(grads) != set(current) or set(state.first_moment) != set(current):
        raise ValueError("gradient / optimizer state keys do not match the trainable parameters")
    for key, value in current.items():
        if grads[key].shape != value.shape or state.first_moment[key].shape != value.shape:
            raise ValueError(f"shape mismatch for {key}: {grads[key].shape} vs {value.shape}")

    lr = cfg.optimizer_lr if lr is None else lr
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    t = state.step_count + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t

    m_new, v_new, updated = {}, {}, {}
    for key, value in current.items():
        g = grads[key]
        m = b1 * state.first_moment[key] + (1.0 - b1) * g
        v = b2 * state.second_moment[key] + (1.0 - b2) * (g * g)
        m_new[key], v_new[key] = m, v
        updated[key] = value - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    return params.with_trainables(updated), AdamState(m_new, v_new, t)


# ----------------------------- Training -----------------------------

def _snapshot(params: UnfoldedParams) -> Dict[str, Any]:
    return {"delta1": params.delta1.tolist(), "delta2": params.delta2.tolist()}


def train_offline(
    cfg: TrainConfig,
    scenario: ScenarioSpec,
    propagation: PropagationParams,
    K: int,
    variant: str,
    *,
    p_max_w: float = 10.0,
    hidden_width: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[UnfoldedParams, TrainHistory]:
    """
    Unsupervised pretraining: n_batches Adam steps, each on a fresh batch of
    channels (new deployment per matrix unless cfg.redraw_deployments is off).
    Deterministic given cfg.seed (or the rng passed in).
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    params = init_params(K, variant, cfg.init_step_size, rng,
                         n_links=scenario.n_links, hidden_width=hidden_width, p_max_w=p_max_w)
    history = TrainHistory(
        snapshots=[] if cfg.record_snapshots else None,
        started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        adam={"lr": cfg.optimizer_lr, "beta1": cfg.adam_beta1, "beta2": cfg.adam_beta2, "eps": cfg.adam_eps},
    )
    state = AdamState.zeros_like(params)
    fixed = None
    if not cfg.redraw_deployments:
        fixed = generate_deployment(scenario, rng)

    t0 = time.perf_counter()
    bar = tqdm(range(cfg.n_batches), desc=f"train {variant} K={K}",
               disable=not progress_enabled(cfg.progress))
    for step in bar:
        batch = sample_batch(fixed if fixed is not None else scenario, propagation, cfg.batch_size, rng)
        value, grads = loss_and_grad(params, batch, "max_power", p_max_w)
        params, state = adam_step(params, grads, state, cfg)
        history.losses.append(value)
        if history.snapshots is not None:
            history.snapshots.append(_snapshot(params))
        if (step + 1) % cfg.log_every == 0:
            recent = float(np.mean(history.losses[-cfg.log_every:]))
            logger.info(
                f"train step {step + 1}/{cfg.n_batches} loss={recent:.4f} "
                f"d1=[{params.delta1.min():.3f},{params.delta1.max():.3f}] "
                f"d2=[{params.delta2.min():.3f},{params.delta2.max():.3f}]"
            )
    history.wall_clock_s = time.perf_counter() - t0
    logger.info(f"offline training done: {cfg.n_batches} batches in {history.wall_clock_s:.1f}s")
    return params, history


def _mask_to_layer(params: UnfoldedParams, grads: Dict[str, np.ndarray], layer: int) -> Dict[str, np.ndarray]:
    out = {}
    for key, g in grads.items():
        owner = params.layer_of(key)
        if owner is None:
            keep = np.zeros_like(g)
            keep[layer] = g[layer]
            out[key] = keep
        else:
            out[key] = g if owner == layer else np.zeros_like(g)
    return out


def train_online(
    params: UnfoldedParams,
    H: ChannelMatrix,
    cfg: TrainConfig,
    *,
    p_max_w: float = 10.0,
    p0: P0Rule = "max_power",
) -> Tuple[UnfoldedParams, PowerVector]:
    """
    Adapt to a single realization (batch of one) at cfg.online_lr.

    whole_unroll: cfg.online_steps Adam steps on the full network. The best
    parameters seen (the starting point included) are returned with their
    allocation, so the result is never worse than the untrained network.

    layerwise: cfg.online_steps steps PER LAYER, K * online_steps in total.
    Layer k is trained on the k-layer truncated network with the gradient
    masked to that layer. Truncated losses are not comparable with the full
    one, so best tracking only compares the starting point and the final
    full-network parameters.
    """
    batch = [H]
    best, best_loss = params, loss(params, batch, p0, p_max_w)
    current = params
    state = AdamState.zeros_like(params)

    if cfg.online_schedule == "whole_unroll":
        schedule = [(None, cfg.online_steps)]
    else:
        schedule = [(k, cfg.online_steps) for k in range(params.n_layers)]

    for layer, steps in schedule:
        for _ in range(steps):
            n_active = None if layer is None else layer + 1
            value, grads = loss_and_grad(current, batch, p0, p_max_w, n_active=n_active)
            if layer is None and value < best_loss:
                best, best_loss = current, value
            if layer is not None:
                grads = _mask_to_layer(current, grads, layer)
            current, state = adam_step(current, grads, state, cfg, lr=cfg.online_lr)

    if cfg.online_steps > 0:
        final_loss = loss(current, batch, p0, p_max_w)
        if final_loss < best_loss:
            best, best_loss = current, final_loss

    p_start = PowerVector(initial_power_array(p0, H.n_links, p_max_w), p_max_w)
    p_out, _ = dupgd_forward(best, H, p_start)
    return best.copy(), p_out
