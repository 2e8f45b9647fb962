from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dmimo.closedform import (
    ALTERNATING_MAX_PATHS,
    Architecture,
    HomogeneousEnsemble,
    colocated_comparison,
    dmt_curve,
    dmt_fully_connected,
    dmt_multiuser,
    dmt_partially_connected,
    dmt_slope_fully_connected,
    ergodic_rate_bounds,
    ergodic_rate_homogeneous,
    integer_restricted,
    max_mux_gain,
    ordered_snr_pdf,
    ordered_stream_rate,
    partial_path_diversities,
    per_user_dmt,
)
from dmimo.special import delta

import oracles


def test_ensemble_validation():
    with pytest.raises(ValueError):
        HomogeneousEnsemble(3, 4, 1.0)
    with pytest.raises(ValueError):
        HomogeneousEnsemble(3, 0, 1.0)
    with pytest.raises(ValueError):
        HomogeneousEnsemble(3, 1, 0.0)


def test_pdf_examples():
    ens = HomogeneousEnsemble(1, 1, 2.0)
    assert ordered_snr_pdf(1, ens, 3.0) == pytest.approx(math.exp(-1.5) / 2, rel=1e-15)
    assert ordered_snr_pdf(1, HomogeneousEnsemble(2, 1, 1.0), 0.0) == 0.0
    with pytest.raises(ValueError):
        ordered_snr_pdf(4, HomogeneousEnsemble(3, 1, 1.0), 1.0)
    with pytest.raises(ValueError):
        ordered_snr_pdf(1, HomogeneousEnsemble(3, 1, 1.0), -1.0)


@pytest.mark.parametrize("l", [1, 2, 3])
def test_pdf_normalized(l):
    ens = HomogeneousEnsemble(3, 1, 1.0)
    total = integrate.quad(lambda g: ordered_snr_pdf(l, ens, g), 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    assert abs(total - 1) < 1e-9


@given(st.integers(1, 15), st.data(), st.floats(0.1, 50), st.floats(0, 20))
def test_pdf_matches_literal_formula(l_s, data, gamma_tilde, g):
    l = data.draw(st.integers(1, l_s))
    ours = ordered_snr_pdf(l, HomogeneousEnsemble(l_s, 1, gamma_tilde), g)
    assert ours == pytest.approx(oracles.ordered_pdf_loop(l, l_s, gamma_tilde, g), rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("l_s", [1, 4, 12])
def test_pdf_mixture_is_exponential(l_s):
    grid = np.linspace(0, 30, 301)
    ens = HomogeneousEnsemble(l_s, 1, 3.0)
    mix = np.mean([ordered_snr_pdf(l, ens, grid) for l in range(1, l_s + 1)], axis=0)
    assert np.max(np.abs(mix - np.exp(-grid / 3) / 3)) < 1e-9


def test_closed_form_examples():
    for g in (0.3, 1.0, 40.0):
        assert ergodic_rate_homogeneous(HomogeneousEnsemble(1, 1, g)) == pytest.approx(delta(g), rel=1e-15)
        assert ergodic_rate_homogeneous(HomogeneousEnsemble(5, 5, g)) == pytest.approx(5 * delta(g), rel=1e-15)
    r = ergodic_rate_homogeneous(HomogeneousEnsemble(2, 1, 1.0))
    assert r == pytest.approx(2 * delta(1.0) - delta(0.5), rel=1e-14)
    assert r == pytest.approx(oracles.ORDERED_MAX_OF_2_AT_1, rel=1e-13)


@pytest.mark.parametrize("l_s", range(1, 13))
@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0, 100.0])
def test_ordered_sum_equals_unordered(l_s, gamma):
    ordered = math.fsum(ordered_stream_rate(l, l_s, gamma, "alternating") for l in range(1, l_s + 1))
    assert abs(ordered - l_s * delta(gamma)) < 1e-8


@pytest.mark.parametrize("l_s", [12, 20, 30])
def test_quadrature_backend_against_frozen_references(l_s):
    for l, ref in zip((1, l_s // 2, l_s), oracles.ORDERED_RATES_AT_1[l_s]):
        assert ordered_stream_rate(l, l_s, 1.0, "quadrature") == pytest.approx(ref, rel=1e-9)
        assert ordered_stream_rate(l, l_s, 1.0) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("l_s,tol", [(12, 1e-11), (20, 1e-7), (30, 1e-2)])
def test_alternating_backend_cross_check(l_s, tol):
    # cancellation costs roughly a digit per two paths, hence the backend switch
    for l, ref in zip((1, l_s // 2, l_s), oracles.ORDERED_RATES_AT_1[l_s]):
        assert ordered_stream_rate(l, l_s, 1.0, "alternating") == pytest.approx(ref, rel=tol)


def test_alternating_sum_degrades_past_threshold():
    ref = oracles.ORDERED_RATES_AT_1[30][1]
    bad = ordered_stream_rate(15, 30, 1.0, "alternating")
    assert abs(bad - ref) / ref > 1e-6
    assert ALTERNATING_MAX_PATHS < 20


@given(st.integers(1, 10), st.data(), st.floats(0.05, 200))
def test_stream_rate_matches_quadrature_oracle(l_s, data, gamma):
    l = data.draw(st.integers(1, l_s))
    assert ordered_stream_rate(l, l_s, gamma) == pytest.approx(oracles.ordered_rate_quad(l, l_s, gamma), rel=1e-8)


def test_unknown_backend():
    with pytest.raises(ValueError):
        ordered_stream_rate(1, 3, 1.0, "series")


def test_large_ensembles_use_quadrature():
    r = ergodic_rate_homogeneous(HomogeneousEnsemble(40, 40, 5.0))
    assert r == pytest.approx(40 * delta(5.0), rel=1e-15)
    partial = ergodic_rate_homogeneous(HomogeneousEnsemble(40, 39, 5.0))
    assert partial < r


def test_bounds():
    ens = HomogeneousEnsemble(6, 3, 1.0)
    lo, hi = ergodic_rate_bounds(2.0, 2.0, ens)
    assert lo == hi
    lo1, hi1 = ergodic_rate_bounds(0.5, 2.0, ens)
    lo2, hi2 = ergodic_rate_bounds(0.6, 3.0, ens)
    assert lo1 < lo2 and hi1 < hi2 and lo1 < hi1
    with pytest.raises(ValueError):
        ergodic_rate_bounds(2.0, 1.0, ens)


def test_bounds_sandwich_inhomogeneous_monte_carlo():
    # per-path means spread over [0.5, 2]; the n_s strongest are used
    rng = np.random.default_rng(11)
    means = np.array([0.5, 0.8, 1.1, 1.4, 1.7, 2.0])
    x = rng.exponential(size=(10_000, 6)) * means
    rates = np.sum(np.log2(1 + -np.sort(-x, axis=1)[:, :3]), axis=1)
    lo, hi = ergodic_rate_bounds(0.5, 2.0, HomogeneousEnsemble(6, 3, 1.0))
    assert lo < rates.mean() < hi


def test_colocated_comparison():
    for g in (0.1, 3.0):
        d, c = colocated_comparison(1, 1, 3, g)
        assert d == c == 3 * delta(g)
    d, c = colocated_comparison(2, 2, 3, 7.0)
    assert d == 12 * delta(7.0) and c == 3 * delta(28.0)
    d, c = colocated_comparison(2, 2, 3, 100.0)
    assert d > c
    with pytest.raises(ValueError):
        colocated_comparison(0, 1, 1, 1.0)


def test_max_mux_gain():
    assert max_mux_gain(1, 1, 3) == 3
    assert max_mux_gain(2, 2, 3) == 12
    assert max_mux_gain(3, 2, 4) == 24
    with pytest.raises(ValueError):
        max_mux_gain(1, 1, 0)


def test_fully_connected_dmt_values():
    assert dmt_fully_connected(0, 12) == 12
    assert dmt_fully_connected(12, 12) == 0
    assert dmt_fully_connected(11, 12) == pytest.approx(1 / 12, abs=1e-15)
    h12 = sum(Fraction(1, k) for k in range(1, 13))
    assert dmt_fully_connected(1, 12) == pytest.approx(float(12 - h12), abs=1e-14)
    assert dmt_fully_connected(1, 12) == pytest.approx(oracles.TWELVE_MINUS_H12, abs=1e-14)
    with pytest.raises(ValueError):
        dmt_fully_connected(12.5, 12)
    with pytest.raises(ValueError):
        dmt_fully_connected(-0.1, 12)


@pytest.mark.parametrize("l_s", [1, 3, 12])
def test_fully_connected_slopes(l_s):
    h = 1e-4
    for n_s in range(1, l_s + 1):
        lo = l_s - n_s
        d = np.linspace(lo + 2 * h, lo + 1 - 2 * h, 7)
        fd = [(dmt_fully_connected(x + h, l_s) - dmt_fully_connected(x - h, l_s)) / (2 * h) for x in d]
        assert np.allclose(fd, dmt_slope_fully_connected(l_s, n_s), atol=1e-10)


@given(st.integers(1, 20), st.floats(0, 1))
def test_fully_connected_matches_direct_sum(l_s, u):
    d = u * l_s
    assert dmt_fully_connected(d, l_s) == pytest.approx(oracles.dmt_direct(d, range(1, l_s + 1)), abs=1e-12)


def test_partially_connected_values():
    assert partial_path_diversities(2, 2, 3) == [12, 3]
    assert dmt_partially_connected(0, 2, 2, 3) == 2
    assert dmt_partially_connected(3, 2, 2, 3) == pytest.approx(0.75, abs=1e-15)
    assert dmt_partially_connected(12, 2, 2, 3) == 0
    for d in np.linspace(0, 4, 9):
        assert dmt_partially_connected(d, 1, 1, 4) == pytest.approx(max(0, 1 - d / 4), abs=1e-15)
    with pytest.raises(ValueError):
        dmt_partially_connected(13, 2, 2, 3)


def test_multiuser_values():
    for d in np.linspace(0, 6, 13):
        assert dmt_multiuser(d, 1, 2, 3) == pytest.approx(per_user_dmt(d, 6), abs=1e-15)
    assert dmt_multiuser(0, 3, 2, 4) == 24
    assert dmt_multiuser(6, 2, 2, 3) == 0
    assert dmt_multiuser(2, 2, 2, 3, "uplink") == dmt_multiuser(2, 2, 2, 3, "downlink")
    with pytest.raises(ValueError):
        dmt_multiuser(7, 2, 2, 3)
    with pytest.raises(ValueError):
        dmt_multiuser(1, 2, 2, 3, "sidelink")


@pytest.mark.parametrize("arch,params,g0", [
    ("fully_connected", {"l_s": 12}, 12),
    ("partially_connected", {"k_t": 2, "k_r": 2, "paths": 3}, 2),
    ("partially_connected", {"k_t": 3, "k_r": 2, "paths": 2}, 2),
    ("multiuser_downlink", {"k_u": 2, "k_b": 2, "paths": 3}, 12),
    ("multiuser_uplink", {"k_u": 3, "k_b": 1, "paths": 4}, 12),
])
def test_curve_invariants(arch, params, g0):
    curve = dmt_curve(arch, np.linspace(0, 1, 5), **params)
    d, g = curve.d, curve.g_m
    assert g[0] == g0
    assert g[-1] == 0
    assert np.all(g >= 0)
    assert np.all(np.diff(g) <= 1e-15)
    slopes = np.diff(g) / np.diff(d)
    assert np.all(np.diff(slopes) >= -1e-12)
    assert set(curve.breakpoints) <= set(d.tolist())


def test_partial_curve_breakpoints():
    curve = dmt_curve(Architecture.PARTIALLY_CONNECTED, None, k_t=2, k_r=2, paths=3)
    assert 3.0 in curve.breakpoints and 12.0 in curve.breakpoints
    assert curve.params["max_diversity"] == 12
    slopes = np.diff(curve.g_m) / np.diff(curve.d)
    assert slopes[0] == pytest.approx(-(1 / 12 + 1 / 3))
    assert slopes[-1] == pytest.approx(-1 / 12)


def test_curve_rejects_out_of_range_grid():
    with pytest.raises(ValueError):
        dmt_curve("fully_connected", [13.0], l_s=12)


def test_integer_restriction():
    assert integer_restricted(2.0) == 2
    assert integer_restricted(1.999999999999) == 2
    assert integer_restricted(0.75) == 0
    assert integer_restricted(8.8968) == 8
