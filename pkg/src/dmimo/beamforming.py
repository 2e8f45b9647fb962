"""Beam-steering precoder/combiner, power allocation and achievable rates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .channel import ChannelRealization

__all__ = [
    "BeamformerPair",
    "PowerAllocation",
    "IllConditionedCombinerWarning",
    "COND_LIMIT",
    "build_beamsteering",
    "equal_power",
    "waterfill",
    "whitened_channel",
    "rate_from_whitened",
    "achievable_rate",
    "stream_snrs",
    "lemma2_rate",
    "digital_svd_rate",
]

COND_LIMIT = 1e8


class IllConditionedCombinerWarning(RuntimeWarning):
    """R_n = W^H W is (near) singular; receive columns have lost orthogonality."""


@dataclass
class BeamformerPair:
    """Combined RF x baseband products F_t W_t and F_r W_r, one column per stream."""

    tx_combined: np.ndarray
    rx_combined: np.ndarray

    @property
    def n_s(self) -> int:
        return self.tx_combined.shape[1]


@dataclass
class PowerAllocation:
    p: np.ndarray
    total: float
    water_level: float | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.total = float(self.total)
        if self.total <= 0 or not math.isfinite(self.total):
            raise ValueError("total power must be positive and finite")
        if np.any(self.p < 0):
            raise ValueError("stream powers must be nonnegative")
        if abs(self.p.sum() - self.total) > 1e-9 * max(1.0, self.total):
            raise ValueError(f"powers sum to {self.p.sum()!r}, expected {self.total!r}")


def equal_power(n_s: int, total: float) -> PowerAllocation:
    return PowerAllocation(np.full(n_s, total / n_s), total)


def waterfill(gains, total_power: float) -> PowerAllocation:
    """Exact waterfilling p_l = (mu - 1/g_l)^+ with sum p_l = total_power.

    The water level comes from a sorted active-set search, so no iteration
    tolerance is involved.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("need a nonempty vector of gains")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise ValueError("gains must be finite and positive")
    if not total_power > 0:
        raise ValueError("total power must be positive")
    order = np.argsort(-g, kind="stable")
    inv = 1.0 / g[order]
    csum = np.cumsum(inv)
    active = 1
    for k in range(g.size, 0, -1):
        mu = (total_power + csum[k - 1]) / k
        if mu > inv[k - 1]:
            active = k
            break
    mu = (total_power + csum[active - 1]) / active
    p_sorted = np.zeros(g.size)
    p_sorted[:active] = mu - inv[:active]
    p = np.empty(g.size)
    p[order] = p_sorted
    return PowerAllocation(p, total_power, water_level=mu)


def build_beamsteering(ch: ChannelRealization, n_s: int) -> BeamformerPair:
    """Steer stream l along the l-th strongest path; the transmit column carries e^{j psi_l}."""
    if not 1 <= n_s <= ch.l_s:
        raise ValueError(f"n_s = {n_s} must lie in 1..L_s = {ch.l_s}")
    phases = np.exp(1j * np.angle(ch.alpha_tilde[:n_s]))
    return BeamformerPair(ch.tx_vectors[:, :n_s] * phases, ch.rx_vectors[:, :n_s].copy())


def whitened_channel(H: np.ndarray, bf: BeamformerPair, cond_limit: float = COND_LIMIT):
    """Return (B, ill_conditioned) with log2 det(I + B P B^H) equal to the hybrid link rate.

    When R_n = W^H W is well conditioned, B = L^{-1} W^H H F with R_n = L L^H.
    Otherwise B = U^H H F for an orthonormal basis U of the receive columns'
    span, which is the same quantity whenever R_n is invertible and stays
    finite when it is not.
    """
    W = bf.rx_combined
    G = W.conj().T @ H @ bf.tx_combined
    R_n = W.conj().T @ W
    cond = np.linalg.cond(R_n)
    if cond <= cond_limit:
        chol = np.linalg.cholesky(R_n)
        return solve_triangular(chol, G, lower=True), False
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(W.shape) * np.finfo(float).eps)) if s.size and s[0] > 0 else 0
    U = U[:, :rank]
    return U.conj().T @ H @ bf.tx_combined, True


def rate_from_whitened(B: np.ndarray, p) -> float:
    p = np.asarray(p, dtype=float)
    M = B * np.sqrt(p)
    gram = M.conj().T @ M if M.shape[0] >= M.shape[1] else M @ M.conj().T
    _, logdet = np.linalg.slogdet(np.eye(gram.shape[0]) + gram)
    return max(float(logdet) / math.log(2.0), 0.0)


def achievable_rate(ch: ChannelRealization | np.ndarray, bf: BeamformerPair, pa: PowerAllocation) -> float:
    """log2 det(I + R_n^{-1} W^H H F P F^H H^H W) in bits/s/Hz."""
    H = ch.H if isinstance(ch, ChannelRealization) else np.asarray(ch)
    if H.shape != (bf.rx_combined.shape[0], bf.tx_combined.shape[0]) or pa.p.size != bf.n_s:
        raise ValueError("channel, beamformer and power allocation dimensions disagree")
    B, ill = whitened_channel(H, bf)
    if ill:
        warnings.warn("receive combiner Gram matrix is near singular", IllConditionedCombinerWarning,
                      stacklevel=2)
    return rate_from_whitened(B, pa.p)


def stream_snrs(ch: ChannelRealization, pa: PowerAllocation, n_s: int) -> np.ndarray:
    """SNR_l = p_l |alpha_tilde_l|^2 for the n_s strongest paths."""
    if not 1 <= n_s <= ch.l_s or pa.p.size < n_s:
        raise ValueError("n_s must not exceed L_s or the allocation length")
    return pa.p[:n_s] * ch.path_gains[:n_s]


def lemma2_rate(ch: ChannelRealization, pa: PowerAllocation, n_s: int) -> float:
    """Large-antenna limit of the rate: sum of log2(1 + SNR_l)."""
    return float(np.sum(np.log2(1.0 + stream_snrs(ch, pa, n_s))))


def digital_svd_rate(H: np.ndarray, total_power: float, n_s: int, policy: str = "waterfilling") -> float:
    """Fully digital benchmark: n_s strongest singular modes, waterfilled or equal power."""
    H = np.asarray(H)
    if not 1 <= n_s <= min(H.shape):
        raise ValueError("n_s must not exceed the smaller dimension of H")
    sigma2 = np.linalg.svd(H, compute_uv=False)[:n_s] ** 2
    if policy == "equal":
        return float(np.sum(np.log2(1.0 + total_power / n_s * sigma2)))
    if policy != "waterfilling":
        raise ValueError(f"unknown power policy {policy!r}")
    positive = sigma2[sigma2 > 0]
    if positive.size == 0:
        return 0.0
    pa = waterfill(positive, total_power)
    return float(np.sum(np.log2(1.0 + pa.p * positive)))
