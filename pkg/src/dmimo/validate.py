"""Invariant suite behind ``dmimo validate``, run at reduced trial counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .arrays import ArraySpec, coherence, embed_response, ula_response, upa_response
from .beamforming import (
    BeamformerPair,
    achievable_rate,
    build_beamsteering,
    digital_svd_rate,
    equal_power,
    waterfill,
)
from .channel import LinkConfig, SystemGeometry, sample_channel, sample_paths
from .closedform import (
    HomogeneousEnsemble,
    dmt_curve,
    dmt_fully_connected,
    ordered_snr_pdf,
    ordered_stream_rate,
)
from .config import ConfigError, parse_config
from .montecarlo import ExperimentConfig, Precoder, estimate_outage, run_rate_experiment, trial_rng
from .report import table_to_csv
from .special import delta, exp_integral_e1

__all__ = ["CheckResult", "CHECKS", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99, k)))


def check_unit_norm(seed, threads):
    rng = _rng(seed, 0)
    worst = 0.0
    for _ in range(200):
        n_h, n_v = rng.integers(1, 17, size=2)
        az, el = rng.uniform(-math.pi, math.pi, size=2)
        v = np.asarray(upa_response(ArraySpec.upa(int(n_h), int(n_v)), az, el))
        u = np.asarray(ula_response(ArraySpec.ula(int(n_h)), az))
        worst = max(worst, abs(np.linalg.norm(v) - 1), abs(np.linalg.norm(u) - 1))
    return worst < 1e-12, f"max |norm - 1| = {worst:.2e}"


def check_cross_subarray_orthogonality(seed, threads):
    rng = _rng(seed, 1)
    spec = ArraySpec.ula(16)
    worst = 0.0
    for _ in range(200):
        a = ula_response(spec, rng.uniform(-3, 3))
        b = ula_response(spec, rng.uniform(-3, 3))
        i, j = rng.choice(4, size=2, replace=False) + 1
        worst = max(worst, coherence(embed_response(a, int(i), 4), embed_response(b, int(j), 4)))
    return worst == 0.0, f"max coherence = {worst}"


def check_asymptotic_orthogonality(seed, threads):
    rng = _rng(seed, 2)
    wins = total = 0
    while total < 1000:
        p1, p2 = rng.uniform(-math.pi, math.pi, size=2)
        if abs(math.sin(p1) - math.sin(p2)) <= 0.05:
            continue
        c16 = coherence(ula_response(ArraySpec.ula(16), p1), ula_response(ArraySpec.ula(16), p2))
        c256 = coherence(ula_response(ArraySpec.ula(256), p1), ula_response(ArraySpec.ula(256), p2))
        wins += c256 < c16
        total += 1
    return wins >= 990, f"{wins}/1000 pairs shrink from N=16 to N=256"


def check_upa_kronecker(seed, threads):
    rng = _rng(seed, 3)
    ok = True
    for _ in range(50):
        n_h, n_v = (int(x) for x in rng.integers(1, 9, size=2))
        az, el = rng.uniform(-3, 3, size=2)
        v = np.asarray(upa_response(ArraySpec.upa(n_h, n_v), az, el))
        ref = np.kron(np.exp(2j * math.pi * 0.5 * np.arange(n_h) * math.sin(az)) / math.sqrt(n_h),
                      np.exp(2j * math.pi * 0.5 * np.arange(n_v) * math.sin(el)) / math.sqrt(n_v))
        ok &= bool(np.array_equal(v, ref)) or bool(np.max(np.abs(v - ref)) < 1e-15)
    return ok, "UPA equals kron(horizontal, vertical)"


def check_block_form(seed, threads):
    geometry = SystemGeometry.symmetric_ula(2, 8)
    link = LinkConfig.fixed(2, 2, 3, g=0.7)
    for t in range(50):
        sample_channel(geometry, link, trial_rng(seed, t))  # raises on mismatch
    return True, "rank-one sum equals block form on 50 realizations"


def check_frobenius_mean(seed, threads):
    geometry = SystemGeometry.symmetric_ula(1, 8)
    link = LinkConfig.fixed(1, 1, 3)
    vals = [np.linalg.norm(sample_channel(geometry, link, trial_rng(seed, t), check=False).H) ** 2
            for t in range(4000)]
    mean = float(np.mean(vals))
    return abs(mean / 64 - 1) < 0.05, f"E||H||_F^2 = {mean:.2f} (target 64, 4000 trials)"


def check_reproducibility(seed, threads):
    geometry = SystemGeometry.symmetric_ula(2, 4)
    link = LinkConfig.fixed(2, 2, 3)
    a = sample_paths(geometry, link, trial_rng(seed, 5))
    b = sample_paths(geometry, link, trial_rng(seed, 5))
    return a == b, "same substream gives an identical path list"


def check_block_independence(seed, threads):
    geometry = SystemGeometry.symmetric_ula(2, 1)
    link = LinkConfig.fixed(2, 2, 1)
    mags = np.array([[abs(p.alpha) for p in sorted(sample_paths(geometry, link, trial_rng(seed, t)),
                                                   key=lambda p: (p.rx_rau, p.tx_rau))]
                     for t in range(10_000)])
    corr = np.corrcoef(mags.T)
    off = float(np.max(np.abs(corr[~np.eye(4, dtype=bool)])))
    return off < 0.03, f"max |corr| across blocks = {off:.4f}"


def check_power_allocation(seed, threads):
    rng = _rng(seed, 4)
    ok = True
    for _ in range(200):
        g = rng.exponential(size=int(rng.integers(1, 12))) + 1e-3
        total = float(rng.exponential() * 10 + 1e-3)
        pa = waterfill(g, total)
        mu = pa.water_level
        active = pa.p > 0
        ok &= abs(pa.p.sum() - total) <= 1e-9 * max(1, total)
        ok &= bool(np.allclose(pa.p[active], mu - 1 / g[active], rtol=0, atol=1e-12 * max(1, mu)))
        ok &= bool(np.all(mu <= 1 / g[~active] + 1e-12))
    return bool(ok), "waterfilling sums to P and meets complementary slackness"


def check_rate_monotone(seed, threads):
    geometry = SystemGeometry.symmetric_ula(2, 8)
    link = LinkConfig.fixed(2, 2, 3)
    ok = True
    for t in range(30):
        ch = sample_channel(geometry, link, trial_rng(seed, t))
        bf = build_beamsteering(ch, 6)
        r1 = achievable_rate(ch, bf, equal_power(6, 1.0))
        r2 = achievable_rate(ch, bf, equal_power(6, 2.0))
        ok &= 0 <= r1 <= r2 + 1e-12
    zero = achievable_rate(np.zeros((16, 16)), BeamformerPair(np.eye(16)[:, :2], np.eye(16)[:, :2]),
                           equal_power(2, 1.0))
    return bool(ok) and zero == 0.0, "rate nonnegative, zero for H=0, nondecreasing from P to 2P"


def check_hybrid_gap(seed, threads):
    geometry = SystemGeometry.symmetric_ula(2, 200)
    link = LinkConfig.fixed(2, 2, 3)
    hyb, dig = [], []
    for t in range(20):
        ch = sample_channel(geometry, link, trial_rng(seed, t), check=False)
        pa = equal_power(12, 12 * 10.0 / ch.path_gains.mean())
        hyb.append(achievable_rate(ch, build_beamsteering(ch, 12), pa))
        dig.append(digital_svd_rate(ch.H, pa.total, 12, policy="equal"))
    gap = (np.mean(dig) - np.mean(hyb)) / np.mean(dig)
    return gap < 0.02, f"relative digital-hybrid gap {gap:.4f} at N=200"


def check_special_functions(seed, threads):
    e1_quad = integrate.quad(lambda t: math.exp(-t) / t, 1, np.inf, epsabs=0, epsrel=1e-13)[0]
    seam = abs(exp_integral_e1(1.0, "series") - exp_integral_e1(1.0, "continued_fraction"))
    d1 = integrate.quad(lambda t: math.log2(1 + t) * math.exp(-t), 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    ok = abs(exp_integral_e1(1.0) - e1_quad) < 1e-12 and seam < 1e-11 and abs(delta(1.0) - d1) < 1e-12
    return ok, f"E1(1) err {abs(exp_integral_e1(1.0) - e1_quad):.1e}, seam {seam:.1e}"


def check_eq29_eq30(seed, threads):
    worst = 0.0
    for l_s in range(1, 13):
        for g in (0.1, 1.0, 10.0, 100.0):
            ordered = math.fsum(ordered_stream_rate(l, l_s, g, "alternating") for l in range(1, l_s + 1))
            worst = max(worst, abs(ordered - l_s * delta(g)))
    return worst < 1e-8, f"max |ordered sum - L_s Delta| = {worst:.1e}"


def check_ordered_pdf(seed, threads):
    ens = HomogeneousEnsemble(5, 1, 2.0)
    worst_int = max(abs(integrate.quad(lambda x: ordered_snr_pdf(l, ens, x), 0, np.inf, epsabs=0, epsrel=1e-12)[0] - 1)
                    for l in range(1, 6))
    grid = np.linspace(0, 20, 201)
    mix = np.mean([ordered_snr_pdf(l, ens, grid) for l in range(1, 6)], axis=0)
    worst_mix = float(np.max(np.abs(mix - np.exp(-grid / 2) / 2)))
    return worst_int < 1e-9 and worst_mix < 1e-9, f"integral err {worst_int:.1e}, mixture err {worst_mix:.1e}"


def check_dmt_shape(seed, threads):
    ok = True
    for arch, params in (("fully_connected", {"l_s": 12}),
                         ("partially_connected", {"k_t": 2, "k_r": 2, "paths": 3}),
                         ("multiuser_downlink", {"k_u": 2, "k_b": 2, "paths": 3})):
        curve = dmt_curve(arch, None, **params)
        d, g = curve.d, curve.g_m
        slopes = np.diff(g) / np.diff(d)
        ok &= bool(np.all(g >= 0)) and g[-1] == 0 and bool(np.all(np.diff(slopes) >= -1e-12))
        ok &= bool(np.all(np.diff(g) <= 0))
    ok &= dmt_fully_connected(0, 12) == 12
    return bool(ok), "curves nonnegative, non-increasing, convex; G_m(0) = L_s"


def check_substream_prefix(seed, threads):
    geometry = SystemGeometry.symmetric_ula(1, 4)
    link = LinkConfig.fixed(1, 1, 3)
    short = [sample_paths(geometry, link, trial_rng(seed, t)) for t in range(10)]
    long = [sample_paths(geometry, link, trial_rng(seed, t)) for t in range(20)]
    return short == long[:10], "first trials unchanged when the trial count doubles"


def check_svd_dominates(seed, threads):
    base = dict(geometry=SystemGeometry.symmetric_ula(2, 8), link=LinkConfig.fixed(2, 2, 3), n_s=6,
                snr_grid_db=(0.0, 10.0, 20.0), trials=60, seed=seed)
    bs = run_rate_experiment(ExperimentConfig(**base), threads=threads)
    svd = run_rate_experiment(ExperimentConfig(**base, precoder=Precoder.DIGITAL_SVD), threads=threads)
    ok = bool(np.all(svd["mc_mean_rate"] >= bs["mc_mean_rate"]))
    sandwich = bool(np.all(bs["equal_power_rate"] <= bs["waterfill_rate"])
                    and np.all(bs["waterfill_rate"] <= bs["full_power_rate"]))
    return ok and sandwich, "digital SVD >= beam steering; R_e(P/N_s) <= R_o <= R_e(P)"


def check_outage_ordering(seed, threads):
    cfg = ExperimentConfig(SystemGeometry.symmetric_ula(1, 1), LinkConfig.fixed(1, 1, 2), n_s=1,
                           snr_grid_db=tuple(np.arange(5.0, 60.1, 1.0)), trials=200_000, seed=seed)
    s0 = estimate_outage(cfg, 2, 0.0).metadata["fitted_slope"]
    s5 = estimate_outage(cfg, 2, 0.5).metadata["fitted_slope"]
    return s0 < s5, f"slope r=0: {s0:.3f}, r=0.5: {s5:.3f}"


def check_thread_determinism(seed, threads):
    cfg = ExperimentConfig(SystemGeometry.symmetric_ula(2, 5), LinkConfig.fixed(2, 2, 3), n_s=6,
                           snr_grid_db=(0.0, 20.0), trials=40, seed=seed)
    one = table_to_csv(run_rate_experiment(cfg, threads=1))
    many = table_to_csv(run_rate_experiment(cfg, threads=max(2, threads)))
    return one == many, "single- and multi-threaded CSV bytes identical"


def _rejects(data) -> str | None:
    try:
        parse_config(data)
    except ConfigError as exc:
        return exc.path
    return None


_VALID = {
    "geometry": {"k_t": 1, "k_r": 1, "tx_array": {"kind": "ula", "n_h": 4}, "rx_array": {"kind": "ula", "n_h": 4}},
    "link": {"paths": 3},
    "snr_grid_db": [0, 10],
}


def check_config_rejections(seed, threads):
    import copy

    spacing = copy.deepcopy(_VALID)
    spacing["geometry"]["tx_array"]["d_h"] = 0
    typo = copy.deepcopy(_VALID)
    typo["trails"] = 10
    empty = copy.deepcopy(_VALID)
    empty["snr_grid_db"] = []
    paths = [_rejects(spacing), _rejects(typo), _rejects(empty)]
    ok = _rejects(_VALID) is None and paths == ["geometry.tx_array.d_h", "trails", "snr_grid_db"]
    return ok, f"rejected at {paths}"


CHECKS: dict[str, Callable] = {
    "steering_unit_norm": check_unit_norm,
    "cross_subarray_orthogonality": check_cross_subarray_orthogonality,
    "asymptotic_orthogonality": check_asymptotic_orthogonality,
    "upa_kronecker": check_upa_kronecker,
    "block_form_matches_rank_one_sum": check_block_form,
    "subchannel_frobenius_mean": check_frobenius_mean,
    "path_list_reproducible": check_reproducibility,
    "block_gain_independence": check_block_independence,
    "waterfilling_kkt": check_power_allocation,
    "rate_monotone_in_power": check_rate_monotone,
    "hybrid_digital_gap": check_hybrid_gap,
    "special_functions": check_special_functions,
    "ordered_sum_identity": check_eq29_eq30,
    "ordered_pdf_normalization": check_ordered_pdf,
    "dmt_curve_shape": check_dmt_shape,
    "substream_prefix": check_substream_prefix,
    "svd_dominance_and_sandwich": check_svd_dominates,
    "outage_slope_ordering": check_outage_ordering,
    "thread_determinism": check_thread_determinism,
    "config_rejections": check_config_rejections,
}


def run_checks(seed: int = 2024, threads: int = 1, names: list[str] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        try:
            passed, detail = fn(seed, threads)
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results
