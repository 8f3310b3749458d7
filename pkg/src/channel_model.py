# src/channel_model.py

from __future__ import annotations

"""
Random D2D deployments and instantaneous channel gains.

What this module does, in plain language:
- Drop N transmitters and N receivers uniformly in a rectangular area
  (default 20 m x 20 m). In the bounded scenario each receiver is redrawn
  until it sits within d_max of its own transmitter.
- Turn distances into power gains with a capped free-space-like path loss,
  Rayleigh small-scale fading (unit mean power) and log-normal shadowing.
- Draw batches of channel matrices, either for one fixed deployment or with
  a fresh deployment per matrix.

Conventions: gains[i][j] is the POWER gain from transmitter i to receiver j,
so gains[n][n] is link n's desired gain and column n collects everything that
receiver n hears. All quantities are SI (metres, hertz, watts).
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# ----------------------------- Constants -----------------------------

SPEED_OF_LIGHT = 299_792_458.0
MAX_REJECTION_DRAWS = 1_000_000
_REJECTION_CHUNK = 256

CHANNEL_SCHEMA = "dupgd.channel/v1"
DEPLOYMENT_SCHEMA = "dupgd.deployment/v1"


class InfeasibleScenarioError(ValueError):
    """Raised when a receiver cannot be placed within d_max of its transmitter."""


# ----------------------------- Domain types -----------------------------

@dataclass(frozen=True)
class PropagationParams:
    """Propagation constants; defaults follow the simulation table."""
    carrier_freq_hz: float = 6e9
    pathloss_exponent: float = 2.0
    shadowing_std_db: float = 5.0
    noise_power_w: float = 2e-10
    bandwidth_hz: float = 5e6          # metadata only
    amplitude_gains: bool = False      # store g*sqrt(PL*Xi) instead of g^2*PL*Xi

    def __post_init__(self):
        for name in ("carrier_freq_hz", "pathloss_exponent", "noise_power_w", "bandwidth_hz"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be > 0 (got {v})")
        if not np.isfinite(self.shadowing_std_db) or self.shadowing_std_db < 0:
            raise ValueError(f"shadowing_std_db must be >= 0 (got {self.shadowing_std_db})")


@dataclass(frozen=True)
class ScenarioSpec:
    """Deployment area, number of links, optional tx-rx distance bound (Scen 2)."""
    area_m: Tuple[float, float] = (20.0, 20.0)
    n_links: int = 20
    max_pair_distance_m: Optional[float] = None

    def __post_init__(self):
        area = tuple(float(a) for a in self.area_m)
        if len(area) != 2 or min(area) <= 0:
            raise ValueError(f"area_m must be two positive lengths (got {self.area_m})")
        object.__setattr__(self, "area_m", area)
        if int(self.n_links) != self.n_links or self.n_links < 1:
            raise ValueError(f"n_links must be a positive integer (got {self.n_links})")
        object.__setattr__(self, "n_links", int(self.n_links))
        d_max = self.max_pair_distance_m
        if d_max is not None:
            if d_max < 0:
                raise ValueError(f"max_pair_distance_m must be >= 0 (got {d_max})")
            if d_max > min(area):
                raise ValueError(
                    f"max_pair_distance_m must not exceed the smaller area side "
                    f"({d_max} > {min(area)})"
                )


@dataclass(frozen=True, eq=False)
class Deployment:
    tx_positions: np.ndarray           # (N, 2) metres
    rx_positions: np.ndarray           # (N, 2) metres
    scenario: ScenarioSpec

    def __post_init__(self):
        tx = _frozen_array(self.tx_positions)
        rx = _frozen_array(self.rx_positions)
        n = self.scenario.n_links
        if tx.shape != (n, 2) or rx.shape != (n, 2):
            raise ValueError(f"positions must have shape ({n}, 2); got {tx.shape} and {rx.shape}")
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)

    @property
    def n_links(self) -> int:
        return self.scenario.n_links

    def distances(self) -> np.ndarray:
        """d[i][j] = distance from transmitter i to receiver j."""
        diff = self.tx_positions[:, None, :] - self.rx_positions[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def pair_distances(self) -> np.ndarray:
        return np.diagonal(self.distances()).copy()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": DEPLOYMENT_SCHEMA,
            "area_m": list(self.scenario.area_m),
            "n_links": self.n_links,
            "max_pair_distance_m": self.scenario.max_pair_distance_m,
            "tx_positions": self.tx_positions.tolist(),
            "rx_positions": self.rx_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Deployment":
        if doc.get("schema") != DEPLOYMENT_SCHEMA:
            raise ValueError(f"unsupported deployment schema {doc.get('schema')!r}")
        spec = ScenarioSpec(
            area_m=tuple(doc["area_m"]),
            n_links=int(doc["n_links"]),
            max_pair_distance_m=doc.get("max_pair_distance_m"),
        )
        return cls(np.asarray(doc["tx_positions"], float), np.asarray(doc["rx_positions"], float), spec)


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """One network realization: N x N power gains plus receiver noise power."""
    gains: np.ndarray
    noise_power_w: float
    _digest: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self):
        g = _frozen_array(self.gains)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise ValueError(f"gains must be a non-empty square matrix (got shape {g.shape})")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gains must be finite and non-negative")
        if not np.isfinite(self.noise_power_w) or self.noise_power_w <= 0:
            raise ValueError(f"noise_power_w must be > 0 (got {self.noise_power_w})")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise_power_w", float(self.noise_power_w))

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]

    def digest(self) -> str:
        """sha256 over gain bytes and noise; used to prove paired evaluation."""
        if not self._digest:
            h = hashlib.sha256(np.ascontiguousarray(self.gains, dtype="<f8").tobytes())
            h.update(np.float64(self.noise_power_w).tobytes())
            object.__setattr__(self, "_digest", h.hexdigest())
        return self._digest

    def permuted(self, order) -> "ChannelMatrix":
        """Relabel links: new link k is old link order[k]."""
        idx = np.asarray(order)
        return ChannelMatrix(self.gains[np.ix_(idx, idx)], self.noise_power_w)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": CHANNEL_SCHEMA,
            "n_links": self.n_links,
            "noise_power_w": self.noise_power_w,
            "gains": self.gains.ravel(order="C").tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ChannelMatrix":
        if doc.get("schema") != CHANNEL_SCHEMA:
            raise ValueError(f"unsupported channel schema {doc.get('schema')!r}")
        n = int(doc["n_links"])
        gains = np.asarray(doc["gains"], dtype=float)
        if gains.size != n * n:
            raise ValueError(f"gains has {gains.size} entries, expected {n * n}")
        return cls(gains.reshape(n, n), float(doc["noise_power_w"]))


def stack_gains(batch: List[ChannelMatrix]) -> Tuple[np.ndarray, np.ndarray]:
    """(B, N, N) gains and (B,) noise powers for vectorized evaluation."""
    if not batch:
        raise ValueError("batch must be non-empty")
    sizes = {H.n_links for H in batch}
    if len(sizes) != 1:
        raise ValueError(f"batch mixes network sizes {sorted(sizes)}")
    return np.stack([H.gains for H in batch]), np.array([H.noise_power_w for H in batch])


def _frozen_array(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


# ----------------------------- Operations -----------------------------

def generate_deployment(spec: ScenarioSpec, rng: np.random.Generator) -> Deployment:
    """
    Place transmitters and receivers uniformly in the area.

    With a distance bound, each receiver is redrawn (rejection sampling over
    the whole area) until it lies within d_max of its transmitter, which keeps
    the exact conditional distribution. A bound of 0 pins rx onto tx.
    """
    n = spec.n_links
    area = np.asarray(spec.area_m)
    tx = rng.uniform(0.0, 1.0, size=(n, 2)) * area
    d_max = spec.max_pair_distance_m

    if d_max is None:
        rx = rng.uniform(0.0, 1.0, size=(n, 2)) * area
        return Deployment(tx, rx, spec)

    if d_max == 0:
        return Deployment(tx, tx.copy(), spec)

    rx = np.empty_like(tx)
    for link in range(n):
        draws = 0
        while True:
            if draws >= MAX_REJECTION_DRAWS:
                raise InfeasibleScenarioError(
                    f"link {link}: no receiver within {d_max} m after {draws} draws"
                )
            chunk = min(_REJECTION_CHUNK, MAX_REJECTION_DRAWS - draws)
            cand = rng.uniform(0.0, 1.0, size=(chunk, 2)) * area
            ok = np.flatnonzero(np.linalg.norm(cand - tx[link], axis=1) <= d_max)
            if ok.size:
                rx[link] = cand[ok[0]]
                draws += int(ok[0]) + 1
                break
            draws += chunk
        if draws > 10 * _REJECTION_CHUNK:
            logger.debug(f"link {link}: receiver accepted after {draws} draws")
    return Deployment(tx, rx, spec)


def pathloss_power_gain(d_m, params: PropagationParams):
    """PL(d) = c^2 * min(1, d^-w) / (16 pi^2 f_c^2); scalar or array input."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise ValueError("distance must be >= 0")
    capped = np.maximum(d, 1.0) ** (-params.pathloss_exponent)
    value = SPEED_OF_LIGHT ** 2 * capped / (16.0 * np.pi ** 2 * params.carrier_freq_hz ** 2)
    return float(value) if value.ndim == 0 else value


def sample_channel(
    dep: Deployment,
    params: PropagationParams,
    rng: np.random.Generator,
    *,
    unit_fading: bool = False,
) -> ChannelMatrix:
    """
    gains[i][j] = E_ij * PL(d_ij) * Xi_ij with E = g^2, g ~ Rayleigh(1/sqrt(2)),
    Xi = 10^(X/10), X ~ N(0, std_db^2). Fading is drawn before shadowing.

    unit_fading=True fixes E to 1 (test hook); the rng is still advanced the
    same way so the shadowing draw does not shift.
    """
    n = dep.n_links
    pl = pathloss_power_gain(dep.distances(), params)
    g = rng.rayleigh(scale=1.0 / np.sqrt(2.0), size=(n, n))
    x_db = rng.normal(0.0, 1.0, size=(n, n)) * params.shadowing_std_db
    if unit_fading:
        g = np.ones((n, n))
    xi = 10.0 ** (x_db / 10.0)

    if params.amplitude_gains:
        gains = g * np.sqrt(pl * xi)
    else:
        gains = g * g * pl * xi
    return ChannelMatrix(gains, params.noise_power_w)


def sample_batch(
    dep_source: Union[Deployment, ScenarioSpec],
    params: PropagationParams,
    n_batch: int,
    rng: np.random.Generator,
    *,
    redraw_deployment: Optional[bool] = None,
    unit_fading: bool = False,
) -> List[ChannelMatrix]:
    """
    n_batch independent channel realizations.

    A fixed Deployment keeps positions and redraws fading/shadowing only,
    unless redraw_deployment=True. A ScenarioSpec always redraws the
    deployment before each matrix.
    """
    if int(n_batch) != n_batch or n_batch < 1:
        raise ValueError(f"n_batch must be a positive integer (got {n_batch})")
    if isinstance(dep_source, ScenarioSpec):
        if redraw_deployment is False:
            raise ValueError("a fixed-deployment batch needs a Deployment, not a ScenarioSpec")
        spec, fixed = dep_source, None
    else:
        spec = dep_source.scenario
        fixed = None if redraw_deployment else dep_source

    batch = []
    for _ in range(int(n_batch)):
        dep = fixed if fixed is not None else generate_deployment(spec, rng)
        batch.append(sample_channel(dep, params, rng, unit_fading=unit_fading))
    return batch
