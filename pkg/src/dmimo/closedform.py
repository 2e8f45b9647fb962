"""Large-antenna closed forms: ordered-path ergodic rates, multiplexing gain and DMT curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
from scipy import integrate, stats

from .special import delta

__all__ = [
    "HomogeneousEnsemble",
    "Architecture",
    "DmtCurve",
    "ALTERNATING_MAX_PATHS",
    "ordered_snr_pdf",
    "ordered_stream_rate",
    "ergodic_rate_homogeneous",
    "ergodic_rate_bounds",
    "colocated_comparison",
    "max_mux_gain",
    "dmt_fully_connected",
    "dmt_slope_fully_connected",
    "partial_path_diversities",
    "dmt_partially_connected",
    "per_user_dmt",
    "dmt_multiuser",
    "dmt_curve",
    "integer_restricted",
]

# beyond this many paths the alternating binomial sum loses too many digits
ALTERNATING_MAX_PATHS = 14


@dataclass(frozen=True)
class HomogeneousEnsemble:
    """L_s i.i.d. exponential path SNRs of mean gamma_tilde, the n_s strongest carrying data."""

    l_s: int
    n_s: int
    gamma_tilde: float

    def __post_init__(self):
        if not 1 <= self.n_s <= self.l_s:
            raise ValueError(f"need 1 <= n_s <= l_s, got n_s={self.n_s}, l_s={self.l_s}")
        if not self.gamma_tilde > 0 or not math.isfinite(self.gamma_tilde):
            raise ValueError("gamma_tilde must be positive and finite")


def _check_rank(l: int, l_s: int) -> None:
    if not 1 <= l <= l_s:
        raise ValueError(f"stream index {l} outside 1..{l_s}")


def _log_order_coefficient(l: int, l_s: int) -> float:
    # log of L_s! / ((L_s - l)! (l - 1)!)
    return math.lgamma(l_s + 1) - math.lgamma(l_s - l + 1) - math.lgamma(l)


def ordered_snr_pdf(l: int, ens: HomogeneousEnsemble, gamma):
    """Density of the l-th largest of L_s exponential SNRs with mean gamma_tilde."""
    _check_rank(l, ens.l_s)
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    z = g / ens.gamma_tilde
    log_f = _log_order_coefficient(l, ens.l_s) - l * z - math.log(ens.gamma_tilde)
    if ens.l_s > l:
        with np.errstate(divide="ignore"):
            log_f = log_f + (ens.l_s - l) * np.log(-np.expm1(-z))
    out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def _stream_rate_alternating(l: int, l_s: int, gamma_tilde: float) -> float:
    coeff = math.factorial(l_s) // (math.factorial(l_s - l) * math.factorial(l - 1))
    terms = []
    for k in range(l_s - l + 1):
        m = l_s - k
        sign = -1 if (l_s - l - k) % 2 else 1
        terms.append(sign * coeff * math.comb(l_s - l, k) * delta(gamma_tilde / m) / m)
    return math.fsum(terms)


def _stream_rate_quadrature(l: int, l_s: int, gamma_tilde: float) -> float:
    ens = HomogeneousEnsemble(l_s, l, gamma_tilde)
    # the l-th largest maps to Beta(L_s - l + 1, l) under u = F(gamma)
    beta = stats.beta(l_s - l + 1, l)
    knots = [-gamma_tilde * math.log1p(-float(beta.ppf(q))) for q in (1e-6, 0.01, 0.5, 0.99, 1 - 1e-9)]

    def integrand(x):
        return math.log2(1.0 + x) * ordered_snr_pdf(l, ens, x)

    total = 0.0
    edges = [0.0] + knots
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, a, b, epsabs=1e-15, epsrel=1e-11, limit=200)[0]
    total += integrate.quad(integrand, edges[-1], np.inf, epsabs=1e-15, epsrel=1e-10, limit=200)[0]
    return total


def ordered_stream_rate(l: int, l_s: int, gamma_tilde: float, backend: str = "auto") -> float:
    """E[log2(1 + gamma_l)] for the l-th strongest of L_s paths."""
    _check_rank(l, l_s)
    if backend == "auto":
        backend = "alternating" if l_s <= ALTERNATING_MAX_PATHS else "quadrature"
    if backend == "alternating":
        return _stream_rate_alternating(l, l_s, gamma_tilde)
    if backend == "quadrature":
        return _stream_rate_quadrature(l, l_s, gamma_tilde)
    raise ValueError(f"unknown backend {backend!r}")


def ergodic_rate_homogeneous(ens: HomogeneousEnsemble, backend: str = "auto") -> float:
    """Ergodic rate of the n_s strongest of L_s i.i.d. paths (equal per-stream SNR gamma_tilde).

    With every path in use the ordered sum collapses to L_s * Delta(gamma_tilde);
    the two forms are cross-checked for L_s <= 12.
    """
    if ens.n_s == ens.l_s:
        unordered = ens.l_s * delta(ens.gamma_tilde)
        if ens.l_s <= 12 and backend != "quadrature":
            ordered = sum(ordered_stream_rate(l, ens.l_s, ens.gamma_tilde, "alternating")
                          for l in range(1, ens.l_s + 1))
            if abs(ordered - unordered) > 1e-8 * max(1.0, unordered):
                raise ArithmeticError(f"ordered sum {ordered!r} != L_s*Delta {unordered!r}")
        return unordered
    return math.fsum(ordered_stream_rate(l, ens.l_s, ens.gamma_tilde, backend)
                     for l in range(1, ens.n_s + 1))


def ergodic_rate_bounds(gamma_tilde_min: float, gamma_tilde_max: float,
                        ens: HomogeneousEnsemble) -> tuple[float, float]:
    """Homogeneous rates at the smallest and largest per-path coefficient."""
    if not 0 < gamma_tilde_min <= gamma_tilde_max:
        raise ValueError("need 0 < gamma_tilde_min <= gamma_tilde_max")
    lower = ergodic_rate_homogeneous(HomogeneousEnsemble(ens.l_s, ens.n_s, gamma_tilde_min))
    upper = ergodic_rate_homogeneous(HomogeneousEnsemble(ens.l_s, ens.n_s, gamma_tilde_max))
    return lower, upper


def colocated_comparison(k_t: int, k_r: int, paths: int, gamma_tilde: float) -> tuple[float, float]:
    """(distributed, co-located) large-antenna rates with all paths used."""
    if min(k_t, k_r, paths) < 1 or not gamma_tilde > 0:
        raise ValueError("arguments must be positive")
    return k_t * k_r * paths * delta(gamma_tilde), paths * delta(k_t * k_r * gamma_tilde)


def max_mux_gain(k_t: int, k_r: int, l_bar: float) -> float:
    if min(k_t, k_r) < 1 or not l_bar > 0:
        raise ValueError("arguments must be positive")
    return float(k_r * k_t * l_bar)


class Architecture(str, Enum):
    FULLY_CONNECTED = "fully_connected"
    PARTIALLY_CONNECTED = "partially_connected"
    MULTIUSER_DOWNLINK = "multiuser_downlink"
    MULTIUSER_UPLINK = "multiuser_uplink"


def _tradeoff(d: float, diversities: Iterable[float]) -> float:
    return math.fsum(max(0.0, 1.0 - d / g) for g in diversities)


def _check_d(d: float, d_max: float) -> float:
    d = float(d)
    # tolerate grid round-off at the right end
    if not (0.0 <= d <= d_max * (1 + 1e-12)):
        raise ValueError(f"diversity gain {d!r} outside [0, {d_max}]")
    return min(d, d_max)


def dmt_fully_connected(d: float, l_s: int) -> float:
    """G_m(d) = sum_l (1 - d/(L_s - l + 1))^+ for d in [0, L_s]."""
    d = _check_d(d, l_s)
    return _tradeoff(d, range(l_s, 0, -1))


def dmt_slope_fully_connected(l_s: int, n_s: int) -> float:
    """Slope of G_m on [L_s - n_s, L_s - n_s + 1)."""
    return -math.fsum(1.0 / (l_s - l + 1) for l in range(1, n_s + 1))


def partial_path_diversities(k_t: int, k_r: int, paths: int) -> list[int]:
    """G_d^(l) = (K_t - l + 1)(K_r - l + 1) L for l = 1..min(K_t, K_r)."""
    return [(k_t - l + 1) * (k_r - l + 1) * paths for l in range(1, min(k_t, k_r) + 1)]


def dmt_partially_connected(d: float, k_t: int, k_r: int, paths: int) -> float:
    # d may reach the first path's diversity K_t K_r L, not just L_s
    diversities = partial_path_diversities(k_t, k_r, paths)
    d = _check_d(d, max(diversities))
    return _tradeoff(d, diversities)


def per_user_dmt(d_i: float, l_s_i: int) -> float:
    return dmt_fully_connected(d_i, l_s_i)


def dmt_multiuser(d: float, k_u: int, k_b: int, paths: int, direction: str = "downlink") -> float:
    """Aggregate K_u-user tradeoff; uplink uses K_b L as the summation limit as well."""
    if direction not in ("downlink", "uplink"):
        raise ValueError(f"unknown direction {direction!r}")
    l_s = k_b * paths
    d = _check_d(d, l_s)
    return k_u * _tradeoff(d, range(l_s, 0, -1))


@dataclass
class DmtCurve:
    architecture: Architecture
    points: list[tuple[float, float]]
    params: dict = field(default_factory=dict)

    @property
    def d(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def g_m(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def breakpoints(self) -> list[float]:
        return list(self.params.get("breakpoints", []))


def _architecture_setup(architecture: Architecture, params: dict):
    if architecture is Architecture.FULLY_CONNECTED:
        l_s = int(params["l_s"])
        return (lambda d: dmt_fully_connected(d, l_s)), float(l_s), list(range(0, l_s + 1))
    if architecture is Architecture.PARTIALLY_CONNECTED:
        k_t, k_r, paths = int(params["k_t"]), int(params["k_r"]), int(params["paths"])
        divs = partial_path_diversities(k_t, k_r, paths)
        return (lambda d: dmt_partially_connected(d, k_t, k_r, paths)), float(max(divs)), [0] + sorted(divs)
    k_u, k_b, paths = int(params["k_u"]), int(params["k_b"]), int(params["paths"])
    direction = "downlink" if architecture is Architecture.MULTIUSER_DOWNLINK else "uplink"
    l_s = k_b * paths
    return (lambda d: dmt_multiuser(d, k_u, k_b, paths, direction)), float(l_s), list(range(0, l_s + 1))


def dmt_curve(architecture: Architecture | str, d_grid: Iterable[float] | None = None, **params) -> DmtCurve:
    """Evaluate a tradeoff curve on ``d_grid`` merged with every breakpoint of the curve."""
    architecture = Architecture(architecture)
    fn, d_max, breaks = _architecture_setup(architecture, params)
    grid = set(float(b) for b in breaks)
    if d_grid is not None:
        for d in d_grid:
            _check_d(d, d_max)
            grid.add(float(min(d, d_max)))
    points = [(d, fn(d)) for d in sorted(grid)]
    info = dict(params, breakpoints=[float(b) for b in breaks], max_diversity=d_max)
    return DmtCurve(architecture, points, info)


def integer_restricted(g_m: float, tol: float = 1e-9) -> int:
    """Largest integer multiplexing gain not exceeding g_m."""
    return int(math.floor(g_m + tol))
