# src/objective.py

from __future__ import annotations

"""
Sum-rate objective, its gradient and the box projection.

Index convention (same as channel_model): gains[m][k] is the power gain from
transmitter m to receiver k. For receiver k

    gamma_k = sum_m p_m gains[m][k] + sigma^2        (everything received)
    eta_k   = gamma_k - p_k gains[k][k]              (interference + noise)
    SINR_k  = p_k gains[k][k] / eta_k

and with rho = -sum_k log2(1 + SINR_k), differentiating gives

    d rho / d p_n = -Psi_n + Phi_n
    Psi_n = gains[n][n] / (ln2 * gamma_n)
    Phi_n = (1/ln2) * sum_{k != n} gains[n][k] * w_k,
            w_k = gains[k][k] p_k / (eta_k gamma_k)

No 1/N factor: the gradient is that of the un-normalized sum rate.

Every array helper broadcasts over leading batch axes: p is (..., N),
gains (..., N, N), noise scalar or (...,). The public operations take
PowerVector / ChannelMatrix values.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.channel_model import ChannelMatrix

LN2 = float(np.log(2.0))


class DimensionError(ValueError):
    """Power vector and channel matrix disagree on the number of links."""


class NonFiniteError(ValueError):
    """A NaN/Inf showed up in an objective, gradient or projection."""


# ----------------------------- Domain types -----------------------------

@dataclass(frozen=True, eq=False)
class PowerVector:
    """Transmit powers in watts, each in [0, p_max_w]."""
    p: np.ndarray
    p_max_w: float

    def __post_init__(self):
        arr = np.array(self.p, dtype=float, copy=True).reshape(-1)
        if not np.isfinite(self.p_max_w) or self.p_max_w <= 0:
            raise ValueError(f"p_max_w must be > 0 (got {self.p_max_w})")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("power vector contains NaN/Inf")
        if np.any(arr < 0) or np.any(arr > self.p_max_w):
            raise ValueError(f"powers must lie in [0, {self.p_max_w}]")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)
        object.__setattr__(self, "p_max_w", float(self.p_max_w))

    @property
    def n_links(self) -> int:
        return self.p.shape[0]

    @classmethod
    def full(cls, n_links: int, p_max_w: float) -> "PowerVector":
        return cls(np.full(n_links, float(p_max_w)), p_max_w)

    def dbw(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.p)


@dataclass(frozen=True, eq=False)
class RateVector:
    """Per-link spectral efficiency log2(1 + SINR) in bps/Hz."""
    r: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.r))


@dataclass(frozen=True, eq=False)
class GradDecomposition:
    psi: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray

    @property
    def grad(self) -> np.ndarray:
        return -self.psi + self.phi


PowerLike = Union[PowerVector, np.ndarray]


# ----------------------------- Array kernels -----------------------------

def _check_finite(*arrays: np.ndarray, what: str = "objective"):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite value in {what}")


def _noise(noise) -> np.ndarray:
    s = np.asarray(noise, dtype=float)
    return s.reshape(s.shape + (1,)) if s.ndim else s


def _off_diagonal(gains: np.ndarray) -> np.ndarray:
    n = gains.shape[-1]
    return gains * (1.0 - np.eye(n))


def received_power(p: np.ndarray, gains: np.ndarray, noise) -> Tuple[np.ndarray, np.ndarray]:
    """(gamma, eta) per receiver."""
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    gamma = np.einsum("...m,...mk->...k", p, gains) + _noise(noise)
    eta = gamma - p * direct
    return gamma, eta


def sinr_array(p: np.ndarray, gains: np.ndarray, noise) -> np.ndarray:
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    _, eta = received_power(p, gains, noise)
    return p * direct / eta


def link_rates_array(p: np.ndarray, gains: np.ndarray, noise) -> np.ndarray:
    return np.log2(1.0 + sinr_array(p, gains, noise))


def sum_rate_array(p: np.ndarray, gains: np.ndarray, noise) -> np.ndarray:
    return np.sum(link_rates_array(p, gains, noise), axis=-1)


def decompose(p: np.ndarray, gains: np.ndarray, noise):
    """
    Psi, Phi and the intermediates backprop needs: (psi, phi, gamma, eta, w).
    Shared by PGD and the unfolded network so both run the same arithmetic.
    """
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    gamma, eta = received_power(p, gains, noise)
    psi = direct / (LN2 * gamma)
    w = direct * p / (eta * gamma)
    phi = np.einsum("...nk,...k->...n", _off_diagonal(gains), w) / LN2
    return psi, phi, gamma, eta, w


def decompose_vjp(g_psi, g_phi, p, gains, gamma, eta, w):
    """Vector-Jacobian product of p -> (Psi, Phi): returns d/dp of <g_psi,Psi> + <g_phi,Phi>."""
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    g_gamma = -g_psi * direct / (LN2 * gamma * gamma)

    g_w = np.einsum("...nk,...n->...k", _off_diagonal(gains), g_phi) / LN2
    g_p = g_w * direct / (eta * gamma)
    g_eta = -g_w * w / eta
    g_gamma = g_gamma - g_w * w / gamma

    # eta = gamma - p * direct
    g_gamma = g_gamma + g_eta
    g_p = g_p - g_eta * direct
    # gamma_k = sum_m p_m gains[m][k] + noise
    g_p = g_p + np.einsum("...mk,...k->...m", gains, g_gamma)
    return g_p


def step_scale(p_max_w: float) -> float:
    """
    Steps are taken in units of p / p_max: the gradient w.r.t. p/p_max is
    p_max * grad(rho), and moving p/p_max by u moves p by p_max * u.
    """
    return float(p_max_w) * float(p_max_w)


def pgd_deltas(step_size: float, p_max_w: float) -> Tuple[float, float]:
    """(d1, d2) that make step_update a plain step_size gradient step at this p_max."""
    d = float(step_size) / step_scale(p_max_w)
    return -d, d


def step_update(p, psi, phi, d1, d2, scale=1.0):
    """
    p - scale * (d1*Psi + d2*Phi); the one update expression both solvers use.
    With (d1, d2) = pgd_deltas(step, p_max) and scale = step_scale(p_max) it
    is p - step * grad(rho), a descent step.
    """
    return p - scale * (d1 * psi + d2 * phi)


def clip_box(z: np.ndarray, p_max_w: float) -> np.ndarray:
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("non-finite projection input")
    return np.clip(z, 0.0, p_max_w)


# ----------------------------- Public operations -----------------------------

def _unpack(p: PowerLike, H: ChannelMatrix) -> np.ndarray:
    arr = p.p if isinstance(p, PowerVector) else np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != H.n_links:
        raise DimensionError(f"power vector has shape {arr.shape}, channel has {H.n_links} links")
    return arr


def sinr(p: PowerLike, H: ChannelMatrix) -> np.ndarray:
    """zeta_n = p_n h[n][n] / (sum_{m != n} p_m h[m][n] + sigma^2)."""
    arr = _unpack(p, H)
    out = sinr_array(arr, H.gains, H.noise_power_w)
    _check_finite(out, what="SINR")
    return out


def link_rates(p: PowerLike, H: ChannelMatrix) -> RateVector:
    return RateVector(np.log2(1.0 + sinr(p, H)))


def sum_rate(p: PowerLike, H: ChannelMatrix) -> float:
    """sum_n log2(1 + zeta_n) in bps/Hz; the objective rho is its negation."""
    return link_rates(p, H).total


def psi_phi(p: PowerLike, H: ChannelMatrix) -> GradDecomposition:
    arr = _unpack(p, H)
    psi, phi, gamma, eta, _ = decompose(arr, H.gains, H.noise_power_w)
    _check_finite(psi, phi, what="gradient decomposition")
    return GradDecomposition(psi=psi, phi=phi, gamma=gamma, eta=eta)


def grad_rho(p: PowerLike, H: ChannelMatrix) -> np.ndarray:
    """Analytical gradient of rho = -sum rate w.r.t. p (bps/Hz per watt)."""
    return psi_phi(p, H).grad


def project_box(p_raw, p_max_w: float) -> PowerVector:
    """Elementwise clamp to [0, p_max_w]; NaN input is an error, never clamped."""
    if not np.isfinite(p_max_w) or p_max_w <= 0:
        raise ValueError(f"p_max_w must be > 0 (got {p_max_w})")
    arr = np.asarray(p_raw, dtype=float).reshape(-1)
    return PowerVector(clip_box(arr, p_max_w), p_max_w)
