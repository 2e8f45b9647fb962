"""Seeded Monte Carlo harness for rate curves, multiplexing convergence, outage and multiuser runs.

Every trial draws from its own substream, derived from (seed, trial index,
user), so results do not depend on execution order or thread count. Per-trial
values are stored by index and reduced in index order.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import stats

from . import __version__
from .arrays import ArraySpec
from .beamforming import (
    BeamformerPair,
    build_beamsteering,
    rate_from_whitened,
    waterfill,
    whitened_channel,
)
from .channel import LinkConfig, PathLaw, SystemGeometry, sample_channel
from .closedform import HomogeneousEnsemble, ergodic_rate_homogeneous

__all__ = [
    "PowerPolicy",
    "Precoder",
    "ExperimentConfig",
    "ResultTable",
    "trial_rng",
    "per_stream_power",
    "RateTrial",
    "rate_trial",
    "run_rate_experiment",
    "run_mux_convergence",
    "outage_threshold",
    "ordered_gain_outage_oracle",
    "estimate_outage",
    "multiuser_rate_experiment",
]

MAX_SEED = 2**64 - 1
OUTAGE_CHUNK = 1 << 16
# substream namespaces
_CHANNEL_STREAM = 0
_OUTAGE_STREAM = 1


class PowerPolicy(str, Enum):
    EQUAL = "equal"
    WATERFILLING = "waterfilling"


class Precoder(str, Enum):
    BEAM_STEERING = "beamsteering"
    DIGITAL_SVD = "digital_svd"


@dataclass
class ExperimentConfig:
    geometry: SystemGeometry
    link: LinkConfig
    n_s: int | str = "adaptive"
    snr_grid_db: tuple = (0.0,)
    trials: int = 2000
    seed: int = 0
    power_policy: PowerPolicy = PowerPolicy.EQUAL
    precoder: Precoder = Precoder.BEAM_STEERING

    def __post_init__(self):
        if self.n_s != "adaptive":
            if isinstance(self.n_s, bool) or int(self.n_s) != self.n_s or self.n_s < 1:
                raise ValueError(f"n_s must be a positive integer or 'adaptive', got {self.n_s!r}")
            self.n_s = int(self.n_s)
        grid = tuple(float(x) for x in self.snr_grid_db)
        if not grid:
            raise ValueError("snr_grid_db must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])) or not all(math.isfinite(x) for x in grid):
            raise ValueError("snr_grid_db must be finite and strictly increasing")
        self.snr_grid_db = grid
        if isinstance(self.trials, bool) or int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        self.trials = int(self.trials)
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed <= MAX_SEED:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        self.power_policy = PowerPolicy(self.power_policy)
        self.precoder = Precoder(self.precoder)
        if self.link.g.shape != (self.geometry.k_r, self.geometry.k_t):
            raise ValueError("link matrices must be K_r x K_t")

    def to_dict(self) -> dict:
        """Plain, JSON-safe echo in the config-file schema."""

        def array(spec: ArraySpec) -> dict:
            return {"kind": spec.kind.value, "n_h": spec.n_h, "n_v": spec.n_v, "d_h": spec.d_h, "d_v": spec.d_v}

        link = {"g": self.link.g.tolist(), "path_law": self.link.path_law.value,
                "angle_law": self.link.angle_law.value}
        if self.link.path_law is PathLaw.FIXED:
            link["paths"] = self.link.path_counts.tolist()
        else:
            link["paths"] = self.link.mean_paths
        return {
            "geometry": {"k_t": self.geometry.k_t, "k_r": self.geometry.k_r,
                         "tx_array": array(self.geometry.tx_array), "rx_array": array(self.geometry.rx_array)},
            "link": link,
            "n_s": self.n_s,
            "snr_grid_db": list(self.snr_grid_db),
            "trials": self.trials,
            "seed": self.seed,
            "power_policy": self.power_policy.value,
            "precoder": self.precoder.value,
        }


def provenance(config: dict) -> str:
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:12]
    return f"dmimo-{__version__}+cfg.{digest}"


@dataclass
class ResultTable:
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def rows(self):
        names = list(self.columns)
        for k in range(self.n_rows):
            yield {name: self.columns[name][k] for name in names}


def trial_rng(seed: int, trial: int, user: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_CHANNEL_STREAM, trial, user)))


def _map_trials(fn: Callable[[int], object], n: int, threads: int) -> list:
    if threads <= 1 or n <= 1:
        return [fn(t) for t in range(n)]
    bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)

    def block(k):
        return [fn(t) for t in range(bounds[k], bounds[k + 1])]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunks = list(pool.map(block, range(len(bounds) - 1)))
    return [item for chunk in chunks for item in chunk]


def _mean_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means and standard errors down axis 0 (std with ddof=1; zero for one trial)."""
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(n)


def per_stream_power(gamma_bar: float, l_s: int, nn: int, g_sum: float) -> float:
    """Equal per-stream power p giving mean path coefficient gamma_bar.

    gamma_bar = (1/L_s) sum_l p g_l N_t N_r / L_l = p N_t N_r sum_ij g_ij / L_s.
    """
    return gamma_bar * l_s / (nn * g_sum)


def _closed_form_column(cfg: ExperimentConfig, snr_lin: np.ndarray) -> np.ndarray:
    if not cfg.link.is_homogeneous:
        return np.full(snr_lin.size, np.nan)
    l_s = int(cfg.link.path_counts.sum())
    n_s = l_s if cfg.n_s == "adaptive" else cfg.n_s
    if n_s > l_s:
        return np.full(snr_lin.size, np.nan)
    return np.array([ergodic_rate_homogeneous(HomogeneousEnsemble(l_s, n_s, float(s))) for s in snr_lin])


def _svd_rates(sigma2: np.ndarray, total_power: float) -> float:
    positive = sigma2[sigma2 > 0]
    if positive.size == 0:
        return 0.0
    pa = waterfill(positive, total_power)
    return float(np.sum(np.log2(1.0 + pa.p * positive)))


@dataclass
class RateTrial:
    """One realization's rates at every grid point.

    ``rates`` columns: equal power, waterfilled, full power (P per stream),
    digital SVD (waterfilled), total power.
    """

    rates: np.ndarray
    ill_conditioned: bool
    clipped: bool
    mean_path_count: float
    l_s: int


def rate_trial(cfg: ExperimentConfig, t: int, digital_benchmark: bool = True) -> RateTrial:
    """Evaluate trial ``t`` of ``cfg``; depends only on (seed, t), never on other trials."""
    geometry, link = cfg.geometry, cfg.link
    snr_lin = 10.0 ** (np.asarray(cfg.snr_grid_db) / 10.0)
    nn = geometry.n_t * geometry.n_r
    g_sum = float(link.g.sum())
    if g_sum <= 0:
        raise ValueError("at least one large-scale gain must be positive")
    need_svd = digital_benchmark or cfg.precoder is Precoder.DIGITAL_SVD
    ch = sample_channel(geometry, link, trial_rng(cfg.seed, t))
    n_s = ch.l_s if cfg.n_s == "adaptive" else min(cfg.n_s, ch.l_s)
    clipped = cfg.n_s != "adaptive" and cfg.n_s > ch.l_s
    bf = build_beamsteering(ch, n_s)
    B, ill = whitened_channel(ch.H, bf)
    gains = ch.path_gains[:n_s]
    sigma2 = np.linalg.svd(ch.H, compute_uv=False)[:n_s] ** 2 if need_svd else None
    out = np.full((snr_lin.size, 5), np.nan)
    for k, s in enumerate(snr_lin):
        p = per_stream_power(s, ch.l_s, nn, g_sum)
        total = n_s * p
        out[k, 0] = rate_from_whitened(B, np.full(n_s, p))
        out[k, 1] = rate_from_whitened(B, waterfill(gains, total).p)
        out[k, 2] = rate_from_whitened(B, np.full(n_s, total))
        out[k, 3] = _svd_rates(sigma2, total) if need_svd else np.nan
        out[k, 4] = total
    return RateTrial(out, ill, clipped, float(ch.path_counts.mean()), ch.l_s)


def run_rate_experiment(cfg: ExperimentConfig, threads: int = 1, digital_benchmark: bool = True) -> ResultTable:
    """Monte Carlo ergodic rate per SNR point, with the closed form alongside.

    The grid holds SNR_a (the mean path coefficient gamma-bar, equal to
    gamma-tilde when the link is homogeneous) in dB; the total power follows
    from it per realization. Equal, waterfilled and full-power (P per stream)
    allocations are all evaluated on the same realizations.
    """
    snr_lin = 10.0 ** (np.asarray(cfg.snr_grid_db) / 10.0)
    if float(cfg.link.g.sum()) <= 0:
        raise ValueError("at least one large-scale gain must be positive")

    results = _map_trials(lambda t: rate_trial(cfg, t, digital_benchmark), cfg.trials, threads)
    rates = np.stack([r.rates for r in results])
    ill = np.array([r.ill_conditioned for r in results])
    clipped = np.array([r.clipped for r in results])
    equal_m, equal_se = _mean_stderr(rates[:, :, 0])
    wf_m, wf_se = _mean_stderr(rates[:, :, 1])
    full_m, full_se = _mean_stderr(rates[:, :, 2])
    svd_m, svd_se = _mean_stderr(rates[:, :, 3])
    if cfg.precoder is Precoder.DIGITAL_SVD:
        mc_m, mc_se = svd_m, svd_se
    elif cfg.power_policy is PowerPolicy.WATERFILLING:
        mc_m, mc_se = wf_m, wf_se
    else:
        mc_m, mc_se = equal_m, equal_se

    n_rows = snr_lin.size
    columns = {
        "snr_a_db": np.asarray(cfg.snr_grid_db),
        "mc_mean_rate": mc_m,
        "mc_stderr": mc_se,
        "closed_form_rate": _closed_form_column(cfg, snr_lin),
        "digital_svd_rate": svd_m,
        "singularity_warnings": np.full(n_rows, int(ill.sum())),
        "gamma_tilde": snr_lin,
        "total_power": rates[:, :, 4].mean(axis=0),
        "digital_svd_stderr": svd_se,
        "equal_power_rate": equal_m,
        "equal_power_stderr": equal_se,
        "waterfill_rate": wf_m,
        "waterfill_stderr": wf_se,
        "full_power_rate": full_m,
        "full_power_stderr": full_se,
    }
    config = cfg.to_dict()
    metadata = {
        "config": config,
        "provenance": provenance(config),
        "realized_mean_path_count": float(np.mean([r.mean_path_count for r in results])),
        "realized_mean_total_paths": float(np.mean([r.l_s for r in results])),
        "warnings": {"singular_combiner_trials": int(ill.sum()), "streams_clipped_trials": int(clipped.sum())},
    }
    return ResultTable(columns, metadata)


def run_mux_convergence(cfg: ExperimentConfig) -> ResultTable:
    """Psi(gamma) = R(gamma)/log2(gamma) and the per-doubling slope R(2 gamma) - R(gamma), closed form."""
    if not cfg.link.is_homogeneous:
        raise ValueError("multiplexing convergence needs a homogeneous link")
    l_s = int(cfg.link.path_counts.sum())
    n_s = l_s if cfg.n_s == "adaptive" else cfg.n_s
    snr_lin = 10.0 ** (np.asarray(cfg.snr_grid_db) / 10.0)
    rate = np.array([ergodic_rate_homogeneous(HomogeneousEnsemble(l_s, n_s, float(s))) for s in snr_lin])
    rate2 = np.array([ergodic_rate_homogeneous(HomogeneousEnsemble(l_s, n_s, 2.0 * float(s))) for s in snr_lin])
    log_snr = np.log2(snr_lin)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(snr_lin > 1.0, rate / log_snr, np.nan)
    columns = {
        "snr_db": np.asarray(cfg.snr_grid_db),
        "closed_form_rate": rate,
        "psi": psi,
        "rate_at_double_snr": rate2,
        "slope_per_doubling": rate2 - rate,
    }
    config = cfg.to_dict()
    metadata = {
        "config": config,
        "provenance": provenance(config),
        "l_s": l_s,
        "n_s": n_s,
        "warnings": {"excluded_psi_points": int(np.sum(snr_lin <= 1.0))},
    }
    return ResultTable(columns, metadata)


def outage_threshold(snr: float, rate_exponent: float, rate_floor_bits: float = 1.0) -> float:
    """Gain threshold below which the l-th stream is in outage.

    For r > 0 the target rate is r log2(snr), giving (snr^r - 1)/snr. At r = 0
    that target is zero and outage never happens, so a fixed target of
    ``rate_floor_bits`` is used instead: (2^floor - 1)/snr.
    """
    if rate_exponent > 0:
        return (snr**rate_exponent - 1.0) / snr
    return (2.0**rate_floor_bits - 1.0) / snr


def ordered_gain_outage_oracle(threshold: float, stream_index: int, l_s: int) -> float:
    """P(l-th largest of L_s Exp(1) < threshold): at least L_s - l + 1 draws fall below it."""
    f = -math.expm1(-threshold)
    return float(stats.binom.sf(l_s - stream_index, l_s, f))


def _fit_window(prob: np.ndarray, events: np.ndarray, lo: float, hi: float, min_events: int):
    ok = (prob >= lo) & (prob <= hi) & (events >= min_events)
    best, start = (0, 0), None
    for k, flag in enumerate(list(ok) + [False]):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start > best[1] - best[0]:
                best = (start, k)
            start = None
    return best


def _loglog_slope(snr_db: np.ndarray, prob: np.ndarray) -> float:
    if snr_db.size < 2 or np.any(prob <= 0):
        return math.nan
    return float(np.polyfit(snr_db / 10.0, np.log10(prob), 1)[0])


def estimate_outage(
    cfg: ExperimentConfig,
    stream_index: int,
    rate_exponent: float,
    rate_floor_bits: float = 1.0,
    threads: int = 1,
    min_events: int = 50,
    window: tuple[float, float] = (1e-5, 1e-1),
) -> ResultTable:
    """Empirical outage of the l-th strongest path and its high-SNR log-log slope.

    Fast path: the normalized path gains are sampled directly as L_s unit
    exponentials per trial, so no channel matrices are built.
    """
    if not cfg.link.is_homogeneous:
        raise ValueError("outage estimation needs a homogeneous fixed-path link")
    if not 0 <= rate_exponent < 1:
        raise ValueError("rate exponent must lie in [0, 1)")
    l_s = int(cfg.link.path_counts.sum())
    if not 1 <= stream_index <= l_s:
        raise ValueError(f"stream index {stream_index} outside 1..{l_s}")

    n_chunks = -(-cfg.trials // OUTAGE_CHUNK)

    def chunk(c: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_OUTAGE_STREAM, c)))
        m = min(OUTAGE_CHUNK, cfg.trials - c * OUTAGE_CHUNK)
        gains = rng.standard_exponential((m, l_s))
        return np.sort(gains, axis=1)[:, l_s - stream_index]

    ordered = np.concatenate(_map_trials(chunk, n_chunks, threads))
    ordered.sort()
    snr_db = np.asarray(cfg.snr_grid_db)
    snr_lin = 10.0 ** (snr_db / 10.0)
    thresholds = np.array([outage_threshold(s, rate_exponent, rate_floor_bits) for s in snr_lin])
    events = np.searchsorted(ordered, thresholds, side="left")
    prob = events / cfg.trials
    stderr = np.sqrt(prob * (1.0 - prob) / cfg.trials)
    oracle = np.array([ordered_gain_outage_oracle(t, stream_index, l_s) for t in thresholds])

    a, b = _fit_window(prob, events, window[0], window[1], min_events)
    in_window = np.zeros(snr_db.size, dtype=int)
    in_window[a:b] = 1
    fitted = _loglog_slope(snr_db[a:b], prob[a:b]) if b - a >= 2 else math.nan
    oracle_slope = _loglog_slope(snr_db[a:b], oracle[a:b]) if b - a >= 2 else math.nan
    excluded = (events < min_events).astype(int)

    columns = {
        "snr_db": snr_db,
        "threshold": thresholds,
        "outage_events": events,
        "outage_prob": prob,
        "outage_stderr": stderr,
        "oracle_prob": oracle,
        "in_fit_window": in_window,
        "insufficient_events": excluded,
    }
    config = cfg.to_dict()
    metadata = {
        "config": config,
        "provenance": provenance(config),
        "l_s": l_s,
        "stream_index": stream_index,
        "rate_exponent": rate_exponent,
        "rate_floor_bits": rate_floor_bits,
        "fitted_slope": fitted,
        "oracle_slope": oracle_slope,
        "asymptotic_slope": -(l_s - stream_index + 1) * (1.0 - rate_exponent),
        "fit_window_db": [float(snr_db[a]), float(snr_db[b - 1])] if b > a else None,
        "warnings": {"insufficient_event_points": int(excluded.sum()),
                     "no_fit_window": int(b - a < 2)},
    }
    return ResultTable(columns, metadata)


def multiuser_rate_experiment(cfg: ExperimentConfig, k_u: int, threads: int = 1) -> ResultTable:
    """Downlink with K_u users; the BS precoder concatenates every user's beam-steering columns.

    ``cfg.geometry`` describes one user's link: tx side = the K_b BS subarrays,
    rx side = the user's single array (k_r = 1). User u of trial t draws from
    substream (t, u), so K_u = 1 reproduces the single-user run exactly.
    """
    geometry, link = cfg.geometry, cfg.link
    if geometry.k_r != 1:
        raise ValueError("each mobile station has one array (k_r = 1)")
    if cfg.n_s == "adaptive":
        raise ValueError("multiuser runs need a fixed per-user n_s")
    if k_u < 1:
        raise ValueError("need at least one user")
    n_s = cfg.n_s
    if k_u * n_s > geometry.k_t * geometry.n_t:
        raise ValueError(f"{k_u} users x {n_s} streams exceed the {geometry.k_t * geometry.n_t} BS antennas")
    snr_lin = 10.0 ** (np.asarray(cfg.snr_grid_db) / 10.0)
    nn = geometry.n_t * geometry.n_r
    g_sum = float(link.g.sum())

    def one(t: int):
        chans = [sample_channel(geometry, link, trial_rng(cfg.seed, t, u)) for u in range(k_u)]
        if any(ch.l_s < n_s for ch in chans):
            raise ValueError(f"n_s = {n_s} exceeds a user's path count")
        beams = [build_beamsteering(ch, n_s) for ch in chans]
        F_b = np.hstack([bf.tx_combined for bf in beams])
        rates = np.zeros((k_u, snr_lin.size))
        isr = np.zeros((k_u, n_s))
        ill_any = False
        for u, (ch, bf) in enumerate(zip(chans, beams)):
            joint = BeamformerPair(F_b, bf.rx_combined)
            B, ill = whitened_channel(ch.H, joint)
            ill_any |= ill
            own = slice(u * n_s, (u + 1) * n_s)
            others = np.ones(k_u * n_s, dtype=bool)
            others[own] = False
            B_int = B[:, others]
            for k, s in enumerate(snr_lin):
                p = per_stream_power(s, ch.l_s, nn, g_sum)
                total = rate_from_whitened(B, np.full(k_u * n_s, p))
                interference = rate_from_whitened(B_int, np.full(B_int.shape[1], p)) if B_int.shape[1] else 0.0
                rates[u, k] = total - interference
            raw = bf.rx_combined.conj().T @ ch.H @ F_b
            power = np.abs(raw) ** 2
            signal = np.diag(power[:, own])
            isr[u] = power[:, others].sum(axis=1) / signal
        return rates, isr, ill_any

    results = _map_trials(one, cfg.trials, threads)
    rates = np.stack([r[0] for r in results])  # trials x users x snr
    isr = np.stack([r[1] for r in results])    # trials x users x streams
    ill = int(sum(r[2] for r in results))

    columns = {"snr_db": np.asarray(cfg.snr_grid_db)}
    for u in range(k_u):
        m, se = _mean_stderr(rates[:, u, :])
        columns[f"user_{u + 1}_rate"] = m
        columns[f"user_{u + 1}_stderr"] = se
    sum_m, sum_se = _mean_stderr(rates.sum(axis=1))
    columns["sum_rate"] = sum_m
    columns["sum_rate_stderr"] = sum_se
    columns["closed_form_user_rate"] = _closed_form_column(cfg, snr_lin)
    per_stream_isr = isr.mean(axis=0)
    columns["mean_isr"] = np.full(snr_lin.size, float(per_stream_isr.mean()))
    columns["max_stream_isr"] = np.full(snr_lin.size, float(per_stream_isr.max()))
    columns["singularity_warnings"] = np.full(snr_lin.size, ill)

    config = cfg.to_dict()
    config["k_u"] = k_u
    metadata = {
        "config": config,
        "provenance": provenance(config),
        "k_u": k_u,
        "per_stream_isr": per_stream_isr.tolist(),
        "warnings": {"singular_combiner_trials": ill},
    }
    return ResultTable(columns, metadata)


def timed(fn: Callable, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
