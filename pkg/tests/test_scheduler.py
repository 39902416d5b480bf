import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpf.rate_adapt import RateDecision
from robustpf.scheduler import (
    NU_CAP,
    THROUGHPUT_FLOOR,
    EnumerationLimitError,
    PendingTx,
    UserLedger,
    enumerate_outcomes,
    expected_rate,
    inverse_throughput_expectation,
    metric_delayed,
    metric_immediate,
    resolve_and_advance,
    select_user,
    utility,
)


def run_ledger(delay, schedule):
    """Feed (capacity, decision-or-None) pairs through a fresh ledger."""
    led = UserLedger(0, delay)
    for n, (cap, dec) in enumerate(schedule, start=1):
        resolve_and_advance(led, n, cap, dec)
    return led


class TestExpectedRate:
    def test_values(self):
        assert expected_rate(RateDecision(2.0, 0.0)) == 2.0
        assert expected_rate(RateDecision(2.0, 1.0)) == 0.0
        assert expected_rate(RateDecision(3.0, 0.1)) == pytest.approx(2.7)


class TestImmediateMetric:
    def test_halving(self):
        assert metric_immediate(1.0, 2.0) == 0.5 * metric_immediate(1.0, 1.0)

    def test_selection(self):
        m = [metric_immediate(1.0, 0.5), metric_immediate(1.0, 1.0)]
        assert select_user(m) == 0

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(0.01, 10), st.floats(0.01, 10)), min_size=1, max_size=6),
           st.floats(0.1, 10.0))
    def test_common_scaling(self, users, c):
        a = [metric_immediate(r, t) for r, t in users]
        b = [metric_immediate(r, c * t) for r, t in users]
        # Only exact ties can be broken differently by rounding.
        if len(set(a)) == len(a):
            assert select_user(a) == select_user(b)


class TestSelectUser:
    def test_cases(self):
        assert select_user([0.3, 0.7]) == 1
        assert select_user([0.5, 0.5]) == 0
        assert select_user([4.0]) == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            select_user([])


class TestEnumerate:
    def test_empty(self):
        d, p = enumerate_outcomes([], [])
        assert d.tolist() == [0.0] and p.tolist() == [1.0]

    def test_bernoulli(self):
        d, p = enumerate_outcomes([2.0], [0.9])
        assert d.tolist() == [0.0, 2.0]
        assert p == pytest.approx([0.1, 0.9])

    def test_cap(self):
        with pytest.raises(EnumerationLimitError):
            enumerate_outcomes(np.ones(NU_CAP + 1), np.full(NU_CAP + 1, 0.5))

    def test_against_monte_carlo(self):
        rates = np.array([1.0, 2.0, 4.0])  # distinct sums identify patterns
        probs = np.array([0.9, 0.3, 0.6])
        d, p = enumerate_outcomes(rates, probs)
        rng = np.random.default_rng(3)
        n = 1_000_000
        sums = (rng.random((n, 3)) < probs) @ rates
        counts = np.array([np.sum(sums == x) for x in d])
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.0, 8.0), st.floats(0.0, 1.0)), max_size=20))
    def test_closure(self, items):
        rates = [r for r, _ in items]
        probs = [s for _, s in items]
        d, p = enumerate_outcomes(rates, probs)
        assert len(d) == 2 ** len(items)
        assert abs(p.sum() - 1.0) <= 1e-12


class TestDelayedMetric:
    def test_worked_example(self):
        want = 0.9 * 0.8 / 13 + 0.9 * 0.2 / 11 + 0.1 * 0.8 / 12 + 0.1 * 0.2 / 10
        got = inverse_throughput_expectation(10.0, [1.0, 2.0], [0.9, 0.8])
        assert got == pytest.approx(want, rel=1e-14)
        # Exact rational arithmetic as the by-hand check.
        F = Fraction
        exact = sum(
            (F(9, 10) if a else F(1, 10)) * (F(8, 10) if b else F(2, 10)) / (10 + a + 2 * b)
            for a in (0, 1) for b in (0, 1)
        )
        assert got == pytest.approx(float(exact), rel=1e-14)
        rng = np.random.default_rng(0)
        d = (rng.random((200_000, 2)) < [0.9, 0.8]) @ np.array([1.0, 2.0])
        assert np.mean(1.0 / (10.0 + d)) == pytest.approx(want, rel=1e-3)

    def test_certain_outcomes_collapse(self):
        got = inverse_throughput_expectation(5.0, [1.0, 2.5, 9.0], [1.0, 1.0, 0.0])
        assert got == pytest.approx(1.0 / 8.5)

    def test_no_delay_equals_immediate_up_to_normalization(self):
        led = run_ledger(0, [(5.0, RateDecision(2.0, 0.1)), (0.0, None), (5.0, RateDecision(1.0, 0.1))])
        n = led.slots + 1
        delayed = metric_delayed(1.7, led, n)
        immediate = metric_immediate(1.7, led.known_throughput())
        assert delayed * (n - 1) == pytest.approx(immediate, rel=1e-14)

    def test_monte_carlo_fallback(self):
        nu = NU_CAP + 3
        rng = np.random.default_rng(1)
        rates = rng.uniform(0.5, 2.0, nu)
        probs = rng.uniform(0.5, 1.0, nu)
        probs[0] = 0.7
        got = inverse_throughput_expectation(20.0, rates, probs, rng=np.random.default_rng(2))
        d = (rng.random((400_000, nu)) < probs) @ rates
        assert got == pytest.approx(np.mean(1.0 / (20.0 + d)), rel=2e-3)

    def test_random_ledgers_against_monte_carlo(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            nu = int(rng.integers(1, 11))
            rates = rng.uniform(0.1, 4.0, nu)
            probs = rng.uniform(0.0, 1.0, nu)
            w0n = rng.uniform(5.0, 50.0)
            exact = inverse_throughput_expectation(w0n, rates, probs)
            d = (rng.random((100_000, nu)) < probs) @ rates
            inv = 1.0 / (w0n + d)
            assert abs(exact - inv.mean()) <= 4 * inv.std() / math.sqrt(inv.size) + 1e-15


class TestLedger:
    def test_cold_start_floor(self):
        led = run_ledger(0, [(1.0, None)] * 5)
        assert led.throughput() == THROUGHPUT_FLOOR
        assert led.known_throughput() == THROUGHPUT_FLOOR
        assert UserLedger(0).throughput() == THROUGHPUT_FLOOR

    def test_arithmetic_mean(self):
        led = run_ledger(0, [(3.0, RateDecision(2.0, 0.1)), (3.0, None)])
        assert led.throughput() == 1.0
        assert led.acked_throughput == 1.0

    def test_success_is_non_strict(self):
        led = run_ledger(0, [(2.0, RateDecision(2.0, 0.0))])
        assert led.outages == 0 and led.total_sum == 2.0
        led = run_ledger(0, [(2.0 - 1e-12, RateDecision(2.0, 0.0))])
        assert led.outages == 1 and led.total_sum == 0.0

    def test_pending_window(self):
        decisions = [(5.0, RateDecision(1.0, 0.1)) for _ in range(6)]
        led = run_ledger(3, decisions)
        assert led.nu == 3
        assert [p.slot for p in led.pending] == [4, 5, 6]
        assert led.acked_slots == 3 and led.w0_n == 3.0
        assert led.known_throughput() == pytest.approx(1.0)
        rates, probs = led.pending_arrays()
        assert rates.tolist() == [1.0] * 3 and probs == pytest.approx([0.9] * 3)

    def test_slot_order_enforced(self):
        led = UserLedger(0)
        with pytest.raises(ValueError):
            resolve_and_advance(led, 2, 1.0, None)

    def test_pending_validation(self):
        with pytest.raises(ValueError):
            PendingTx(1, 1.0, 1.2)
        assert PendingTx(1, 1.0, 0.5, True).resolved

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 6), st.lists(st.tuples(st.floats(0, 4), st.floats(0, 4), st.booleans()), max_size=40))
    def test_conservation(self, delay, slots):
        led = UserLedger(0, delay)
        gained = []
        for n, (cap, rate, sched) in enumerate(slots, start=1):
            dec = RateDecision(rate, 0.1) if sched else None
            resolve_and_advance(led, n, cap, dec)
            gained.append(rate if sched and rate <= cap else 0.0)
            acked = max(n - delay, 0)
            if acked:
                assert led.acked_throughput == pytest.approx(sum(gained[:acked]) / acked, abs=1e-12)
            assert led.acked_sum == pytest.approx(sum(gained[:acked]), abs=1e-12)
            assert led.nu <= delay


class TestUtility:
    def test_values(self):
        assert utility([1.0]) == 0.0
        assert utility([math.e, math.e]) == pytest.approx(2.0)
        assert utility([2.0, 6.0]) - utility([1.0, 3.0]) == pytest.approx(2 * math.log(2))

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            utility([1.0, 0.0])
