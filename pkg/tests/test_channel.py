import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from robustpf.channel import (
    FadingTrace,
    LinkParams,
    bessel_j0,
    coherence_constant,
    correlation,
    gen_trace,
    pathloss,
    standard_fading,
)


def j0_integral(x):
    val, _ = integrate.quad(lambda t: math.cos(x * math.sin(t)), 0, math.pi, epsabs=1e-14)
    return val / math.pi


class TestPathloss:
    def test_power_law(self):
        assert pathloss(200.0, 3.5, 1e-3) / pathloss(100.0, 3.5, 1e-3) == pytest.approx(2**-3.5)

    def test_vectorized(self):
        d = np.array([10.0, 20.0])
        assert np.allclose(pathloss(d, 2.0, 1.0), [1e-2, 2.5e-3])

    def test_nonpositive_distance(self):
        with pytest.raises(ValueError):
            pathloss(0.0, 3.5, 1.0)


class TestBesselJ0:
    def test_matches_scipy_over_range(self):
        x = np.linspace(0.0, 60.0, 3001)
        assert np.max(np.abs(bessel_j0(x) - special.j0(x))) < 1e-11

    @pytest.mark.parametrize("x", [0.5, 3.0, 11.9, 12.1, 25.0])
    def test_matches_integral(self, x):
        assert bessel_j0(x) == pytest.approx(j0_integral(x), abs=1e-11)

    def test_scalar_and_even(self):
        assert isinstance(bessel_j0(1.0), float)
        assert bessel_j0(-2.0) == bessel_j0(2.0)


class TestCorrelation:
    def test_coherence_constant(self):
        q = coherence_constant()
        assert special.j0(q) == pytest.approx(0.5, abs=1e-13)
        assert 1.52 < q < 1.53

    def test_zero_lag(self):
        assert correlation(0, 10.0) == 1.0

    def test_half_at_coherence_time(self):
        assert correlation(10, 10.0) == pytest.approx(0.5, abs=1e-12)

    def test_twice_coherence_time(self):
        assert correlation(20, 10.0) == pytest.approx(j0_integral(2 * coherence_constant()), abs=1e-11)

    def test_infinite_coherence(self):
        assert np.all(correlation(np.arange(5), math.inf) == 1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            correlation(1, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 500.0), st.floats(0.5, 100.0))
    def test_bounded(self, delta, t_c):
        assert -1.0 <= correlation(delta, t_c) <= 1.0


class TestLinkParams:
    def test_snr(self):
        assert LinkParams(0.5, 10.0, 4.0).snr == 2.0

    @pytest.mark.parametrize("args", [(0.0, 10.0, 1.0), (1.0, -1.0, 1.0), (1.0, 10.0, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            LinkParams(*args)


class TestGenTrace:
    def test_single_slot_power(self):
        rng = np.random.default_rng(7)
        link = LinkParams(2.5, 10.0, 1.0)
        draws = np.array([gen_trace(link, 1, rng).h[0] for _ in range(100_000)])
        assert np.mean(np.abs(draws) ** 2) == pytest.approx(2.5, rel=0.02)

    def test_infinite_coherence_constant_trace(self):
        tr = gen_trace(LinkParams(1.0, math.inf, 1.0), 20, np.random.default_rng(1))
        assert np.allclose(tr.h, tr.h[0], atol=1e-4)

    def test_lag_correlation(self):
        rng = np.random.default_rng(11)
        h = np.stack([standard_fading(10.0, 100, rng) for _ in range(10_000)])
        c10 = np.mean(h[:, 10:] * np.conj(h[:, :-10])).real / np.mean(np.abs(h) ** 2)
        assert c10 == pytest.approx(0.5, abs=0.03)

    def test_deterministic_and_read_only(self):
        link = LinkParams(1.0, 10.0, 3.0)
        a = gen_trace(link, 50, np.random.default_rng(3))
        b = gen_trace(link, 50, np.random.default_rng(3))
        assert np.array_equal(a.h, b.h)
        assert len(a) == 50
        with pytest.raises(ValueError):
            a.h[0] = 0

    def test_capacity(self):
        tr = FadingTrace(np.array([1.0 + 0j, 0.0]), LinkParams(1.0, 10.0, 3.0))
        assert np.allclose(tr.capacity(), [2.0, 0.0])

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            standard_fading(10.0, 0, np.random.default_rng(0))
