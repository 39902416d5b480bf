import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from robustpf.channel import FadingTrace, LinkParams, correlation
from robustpf.csi import (
    CsiConfig,
    cov_matrix,
    cov_vector,
    error_variance,
    estimate_from_noise,
    standard_complex_normal,
    synthesize_view,
)
from robustpf.numerics import rician_cdf_exact


def cfg(**kw):
    base = dict(delay=0, coherence_time=10.0, snr=10.0)
    base.update(kw)
    return CsiConfig(**base)


class TestCovariance:
    def test_vector_matches_correlation(self):
        c = cov_vector(cfg(window=3))
        assert np.allclose(c, correlation(np.arange(3), 10.0))

    def test_matrix_two_taps(self):
        r = correlation(1, 10.0)
        assert np.allclose(cov_matrix(cfg(window=2)), [[1.0, r], [r, 1.0]])

    @pytest.mark.parametrize("w", [1, 4, 16])
    def test_psd(self, w):
        assert np.linalg.eigvalsh(cov_matrix(cfg(window=w))).min() >= -1e-12


class TestErrorVariance:
    def test_perfect_csi(self):
        assert error_variance(cfg(pilots=math.inf)) == 0.0
        assert error_variance(cfg(snr=math.inf)) == 0.0

    def test_uninformative(self):
        # J0 has its first zero at 2.405, i.e. lag T_c * 2.405 / q.
        lag = round(10.0 * 2.404825557695773 / 1.521144057668765)
        assert error_variance(cfg(delay=lag, snr=1e9)) == pytest.approx(1.0, abs=1e-3)

    def test_mean_gain_scaling(self):
        assert error_variance(cfg(delay=4, mean_gain=3.0)) == pytest.approx(3 * error_variance(cfg(delay=4)))

    def test_single_tap_closed_form(self):
        c = correlation(6, 10.0)
        expected = 1.0 - c * c / (1.0 + 1.0 / (10.0 * 8))
        assert error_variance(cfg(delay=6)) == pytest.approx(expected, rel=1e-12)

    def test_quantization(self):
        e = error_variance(cfg(quant_bits=2))
        c_term = 1.0 / (1.0 + 1.0 / 80.0)
        assert e == pytest.approx(1.0 - 0.75 * c_term)

    def test_literal_formula(self):
        lit = error_variance(cfg(delay=3, epsilon_formula="literal"))
        c = correlation(3, 10.0)
        assert lit == pytest.approx(c * c / (1.0 + 80.0))

    def test_curve_shape(self):
        # Nondecreasing over [0, T_c]; lower error at the higher SNR.
        for snr_db in (5.0, 10.0):
            curve = [error_variance(cfg(delay=d, snr=10 ** (snr_db / 10))) for d in range(11)]
            assert np.all(np.diff(curve) >= 0)
        for d in range(21):
            assert error_variance(cfg(delay=d, snr=10.0)) <= error_variance(cfg(delay=d, snr=10**0.5))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 20), st.integers(1, 6), st.integers(1, 32), st.floats(0.5, 100.0))
    def test_monotone_in_pilots_and_bits(self, delay, window, pilots, snr):
        e = error_variance(cfg(delay=delay, window=window, pilots=pilots, snr=snr))
        assert 0.0 <= e <= 1.0
        assert error_variance(cfg(delay=delay, window=window, pilots=pilots + 1, snr=snr)) <= e + 1e-12
        e4 = error_variance(cfg(delay=delay, window=window, pilots=pilots, snr=snr, quant_bits=4))
        e8 = error_variance(cfg(delay=delay, window=window, pilots=pilots, snr=snr, quant_bits=8))
        assert e <= e8 + 1e-12 <= e4 + 2e-12

    @pytest.mark.parametrize(
        "kw", [dict(delay=-1), dict(window=0), dict(pilots=0), dict(quant_bits=0), dict(epsilon_formula="x")]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            cfg(**kw)


class TestSynthesis:
    def trace(self, n=1, lam=1.0, seed=0):
        h = np.sqrt(lam) * standard_complex_normal(np.random.default_rng(seed), n)
        return FadingTrace(h, LinkParams(lam, 10.0, 1.0))

    def test_zero_eps_returns_truth(self):
        tr = self.trace(5)
        v = synthesize_view(tr, 2, CsiConfig(0, 10.0, math.inf), np.random.default_rng(1))
        assert v.h_hat == tr.h[2]
        assert v.eps == 0.0

    def test_full_eps_returns_zero(self):
        h = np.array([1 + 1j, -0.5j])
        assert np.all(estimate_from_noise(h, 1.0, 1.0, np.ones(2)) == 0)

    def test_moments(self):
        rng = np.random.default_rng(5)
        lam, eps = 2.0, 0.6
        h = np.sqrt(lam) * standard_complex_normal(rng, 100_000)
        h_hat = estimate_from_noise(h, eps, lam, standard_complex_normal(rng, 100_000))
        assert np.mean(np.abs(h_hat) ** 2) / lam == pytest.approx(0.7, abs=0.01)
        assert np.mean(np.abs(h - h_hat) ** 2) / lam == pytest.approx(0.3, abs=0.01)
        # Error is orthogonal to the estimate.
        assert abs(np.mean((h - h_hat) * np.conj(h_hat))) / lam < 0.01

    def test_view_uses_trace_gain(self):
        tr = self.trace(3, lam=4.0)
        c = cfg(delay=5)
        v = synthesize_view(tr, 1, c, np.random.default_rng(2))
        assert v.eps == pytest.approx(4.0 * error_variance(c))
        assert v.g_hat == abs(v.h_hat)
        assert v.slot == 1

    def test_conditional_law_is_rician(self):
        # Stratify on g_hat and compare |h| with the Rician conditional law.
        rng = np.random.default_rng(9)
        lam, eps, n = 1.0, 0.3, 400_000
        h = standard_complex_normal(rng, n)
        h_hat = estimate_from_noise(h, eps, lam, standard_complex_normal(rng, n))
        g_hat = np.abs(h_hat)
        for lo in (0.3, 0.8, 1.3):
            sel = (g_hat >= lo) & (g_hat < lo + 0.02)
            g = np.abs(h[sel])
            mid = lo + 0.01
            res = stats.kstest(g, lambda b: rician_cdf_exact(b, mid, eps))
            assert res.pvalue > 1e-3
