from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from dmimo.arrays import ArraySpec, embed_response, ula_response
from dmimo.beamforming import (
    BeamformerPair,
    IllConditionedCombinerWarning,
    PowerAllocation,
    achievable_rate,
    build_beamsteering,
    digital_svd_rate,
    equal_power,
    lemma2_rate,
    stream_snrs,
    waterfill,
    whitened_channel,
)
from dmimo.channel import LinkConfig, PathComponent, SystemGeometry, assemble_channel, sample_channel
from dmimo.montecarlo import trial_rng

import oracles


def _channel(k=2, n=8, paths=3, seed=0, trial=0):
    return sample_channel(SystemGeometry.symmetric_ula(k, n), LinkConfig.fixed(k, k, paths), trial_rng(seed, trial))


def test_single_path_beamformer():
    geometry = SystemGeometry.symmetric_ula(1, 4)
    alpha = 0.6 - 0.8j
    path = PathComponent(1, 1, 0, alpha, 4 * alpha, 0.2, 0.0, -0.5, 0.0)
    ch = assemble_channel([path], geometry, LinkConfig.fixed(1, 1, 1))
    bf = build_beamsteering(ch, 1)
    spec = ArraySpec.ula(4)
    assert np.allclose(bf.rx_combined[:, 0], np.asarray(ula_response(spec, 0.2)), atol=1e-15)
    psi = math.atan2(alpha.imag, alpha.real)
    assert np.allclose(bf.tx_combined[:, 0], np.exp(1j * psi) * np.asarray(ula_response(spec, -0.5)), atol=1e-15)


def test_full_stream_beamformer_covers_every_path():
    ch = _channel()
    bf = build_beamsteering(ch, ch.l_s)
    assert bf.n_s == 12
    for l, p in enumerate(ch.paths):
        local = ula_response(ArraySpec.ula(8), p.aoa_az)
        assert np.allclose(bf.rx_combined[:, l], np.asarray(embed_response(local, p.rx_rau, 2)), atol=1e-14)
    assert np.allclose(np.linalg.norm(bf.rx_combined, axis=0), 1)
    assert np.allclose(np.linalg.norm(bf.tx_combined, axis=0), 1)
    # columns on different RAU pairs have disjoint support on at least one side
    G = bf.rx_combined.conj().T @ bf.rx_combined
    for a, pa in enumerate(ch.paths):
        for b, pb in enumerate(ch.paths):
            if pa.rx_rau != pb.rx_rau:
                assert G[a, b] == 0


def test_too_many_streams_rejected():
    ch = _channel(k=1)
    with pytest.raises(ValueError):
        build_beamsteering(ch, 4)


def test_zero_channel_rate_is_zero():
    eye = np.eye(6)
    bf = BeamformerPair(eye[:, :2].astype(complex), eye[:, :2].astype(complex))
    assert achievable_rate(np.zeros((6, 6)), bf, equal_power(2, 10.0)) == 0.0


def test_scalar_channel_rate():
    geometry = SystemGeometry.symmetric_ula(1, 1)
    path = PathComponent(1, 1, 0, 0.5 + 0.5j, 0.5 + 0.5j, 0.0, 0.0, 0.0, 0.0)
    ch = assemble_channel([path], geometry, LinkConfig.fixed(1, 1, 1))
    rate = achievable_rate(ch, build_beamsteering(ch, 1), PowerAllocation([3.0], 3.0))
    assert rate == pytest.approx(math.log2(1 + 3.0 * 0.5), rel=1e-14)


@given(st.integers(0, 10_000), st.integers(1, 12), st.floats(0.01, 1000))
def test_rate_matches_explicit_inverse(trial, n_s, power):
    ch = _channel(n=6, trial=trial)
    bf = build_beamsteering(ch, n_s)
    # the explicit inverse is itself unreliable once R_n is near singular
    assume(np.linalg.cond(bf.rx_combined.conj().T @ bf.rx_combined) < 1e6)
    p = np.full(n_s, power / n_s)
    ours = achievable_rate(ch, bf, PowerAllocation(p, power))
    ref = oracles.rate_explicit(ch.H, bf.tx_combined, bf.rx_combined, p)
    assert ours == pytest.approx(ref, rel=1e-8, abs=1e-9)


def test_duplicate_receive_columns_warn_and_stay_finite():
    geometry = SystemGeometry.symmetric_ula(1, 4)
    # two paths sharing the same AoA: identical receive columns, R_n singular
    s = math.sqrt(16 / 2)
    paths = [PathComponent(1, 1, 0, 1 + 0j, s * (1 + 0j), 0.3, 0.0, 0.1, 0.0),
             PathComponent(1, 1, 1, 0.5 + 0j, s * (0.5 + 0j), 0.3, 0.0, -0.9, 0.0)]
    ch = assemble_channel(paths, geometry, LinkConfig.fixed(1, 1, 2))
    bf = build_beamsteering(ch, 2)
    with pytest.warns(IllConditionedCombinerWarning):
        rate = achievable_rate(ch, bf, equal_power(2, 2.0))
    assert math.isfinite(rate) and rate >= 0
    _, ill = whitened_channel(ch.H, bf)
    assert ill


def test_projector_branch_agrees_when_well_conditioned():
    ch = _channel(n=16)
    bf = build_beamsteering(ch, 6)
    B_chol, ill = whitened_channel(ch.H, bf)
    B_proj, ill_forced = whitened_channel(ch.H, bf, cond_limit=0.5)
    assert not ill and ill_forced
    p = np.full(6, 2.0)
    from dmimo.beamforming import rate_from_whitened
    assert rate_from_whitened(B_chol, p) == pytest.approx(rate_from_whitened(B_proj, p), rel=1e-10)


def test_power_allocation_validation():
    with pytest.raises(ValueError):
        PowerAllocation([1.0, 1.0], 3.0)
    with pytest.raises(ValueError):
        PowerAllocation([2.0, -1.0], 1.0)
    with pytest.raises(ValueError):
        PowerAllocation([0.0], 0.0)
    PowerAllocation([1.0, 2.0 + 1e-12], 3.0)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=16), st.floats(1e-3, 1e4))
def test_waterfill_matches_bisection_and_kkt(gains, total):
    g = np.array(gains)
    pa = waterfill(g, total)
    assert abs(pa.p.sum() - total) <= 1e-9 * max(1, total)
    assert np.allclose(pa.p, oracles.waterfill_bisection(g, total), rtol=1e-9, atol=1e-9 * max(1, total))
    mu = pa.water_level
    active = pa.p > 0
    assert np.allclose(pa.p[active], mu - 1 / g[active], rtol=1e-12, atol=1e-12 * max(1, mu))
    assert np.all(mu <= 1 / g[~active] * (1 + 1e-12))


def test_waterfill_rejects_bad_gains():
    for bad in ([], [0.0, 1.0], [np.inf], [-1.0]):
        with pytest.raises(ValueError):
            waterfill(bad, 1.0)
    with pytest.raises(ValueError):
        waterfill([1.0], 0.0)


def test_stream_snrs():
    ch = _channel()
    pa = PowerAllocation(np.r_[np.zeros(3), np.ones(3)], 3.0)
    snr = stream_snrs(ch, pa, 6)
    assert np.all(snr[:3] == 0)
    assert np.allclose(snr[3:], ch.path_gains[3:6])
    # homogeneous link: gamma-tilde_l = p g N_t N_r / L is the same for every path
    gamma = [(1.0 / 6) * 1.0 * 64 / 3 for _ in range(6)]
    assert len(set(gamma)) == 1


def _lemma2_errors(n, trials):
    errors = []
    for t in range(trials):
        ch = _channel(n=n, trial=t)
        # gamma-tilde = 10 on every path: p N^2 / L = 10
        pa = equal_power(12, 12 * 10.0 * 3 / n ** 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedCombinerWarning)
            rate = achievable_rate(ch, build_beamsteering(ch, 12), pa)
        errors.append(rate / lemma2_rate(ch, pa, 12) - 1)
    return np.array(errors)


def test_lemma2_limit_at_large_n():
    at_200 = _lemma2_errors(200, 60)
    assert np.median(np.abs(at_200)) < 0.01
    assert np.mean(np.abs(at_200)) < np.mean(np.abs(_lemma2_errors(50, 60)))


def test_lemma2_exact_on_orthogonal_angles():
    # sin-angle offsets that are multiples of 2/N make the local responses exactly orthogonal
    n = 8
    geometry = SystemGeometry.symmetric_ula(1, n)
    alphas = [1.2 - 0.3j, -0.4 + 0.9j, 0.2 + 0.1j]
    scale = math.sqrt(n * n / 3)
    paths = [PathComponent(1, 1, k, a, scale * a, math.asin(2 * k / n), 0.0, math.asin(-2 * k / n), 0.0)
             for k, a in enumerate(alphas)]
    ch = assemble_channel(paths, geometry, LinkConfig.fixed(1, 1, 3))
    pa = PowerAllocation([0.5, 1.0, 1.5], 3.0)
    assert achievable_rate(ch, build_beamsteering(ch, 3), pa) == pytest.approx(lemma2_rate(ch, pa, 3), rel=1e-12)


def test_rate_monotone_in_power():
    for t in range(20):
        ch = _channel(n=6, trial=t)
        bf = build_beamsteering(ch, 6)
        assert achievable_rate(ch, bf, equal_power(6, 1.0)) <= achievable_rate(ch, bf, equal_power(6, 2.0)) + 1e-12


@given(st.integers(0, 10_000), st.integers(1, 10), st.floats(0.1, 1e4))
def test_digital_svd_dominates_beamsteering(trial, n_s, power):
    ch = _channel(n=5, trial=trial)
    bf = build_beamsteering(ch, n_s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedCombinerWarning)
        hybrid = achievable_rate(ch, bf, waterfill(ch.path_gains[:n_s], power))
    assert digital_svd_rate(ch.H, power, n_s) >= hybrid - 1e-9
    assert digital_svd_rate(ch.H, power, n_s) >= digital_svd_rate(ch.H, power, n_s, "equal") - 1e-12


def test_digital_svd_rejects_bad_arguments():
    H = np.eye(3)
    with pytest.raises(ValueError):
        digital_svd_rate(H, 1.0, 4)
    with pytest.raises(ValueError):
        digital_svd_rate(H, 1.0, 2, policy="greedy")
    assert digital_svd_rate(np.zeros((3, 3)), 1.0, 2) == 0.0


def test_hybrid_digital_gap_at_n200():
    hyb, dig = [], []
    for t in range(30):
        ch = _channel(n=200, trial=t, seed=3)
        pa = equal_power(12, 12.0)
        hyb.append(achievable_rate(ch, build_beamsteering(ch, 12), pa))
        dig.append(digital_svd_rate(ch.H, 12.0, 12, "equal"))
    assert (np.mean(dig) - np.mean(hyb)) / np.mean(dig) < 0.02
