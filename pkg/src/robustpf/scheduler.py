"""Proportional fair user selection with imperfect CSI and delayed ACKs.

Each user owns a :class:`UserLedger`.  Transmissions are acknowledged
``delay`` slots after they happen; until then they sit in the pending
window and the scheduler only knows their assigned rate and model
success probability.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .rate_adapt import RateDecision

THROUGHPUT_FLOOR = 1e-6
NU_CAP = 22
FALLBACK_DRAWS = 10_000


class EnumerationLimitError(RuntimeError):
    """Too many pending transmissions for exact outcome enumeration."""


@dataclass
class PendingTx:
    slot: int
    rate: float
    success_prob: float
    success: bool | None = None

    def __post_init__(self):
        if not 0.0 <= self.success_prob <= 1.0:
            raise ValueError(f"success_prob must lie in [0, 1], got {self.success_prob}")

    @property
    def resolved(self) -> bool:
        return self.success is not None


@dataclass
class UserLedger:
    """Throughput bookkeeping for one user.

    ``slots`` counts completed slots N.  Slots up to N - delay are
    acknowledged and folded into ``acked_throughput`` by the running-mean
    recursion; later scheduled slots stay in ``pending``.
    """

    user: int
    delay: int = 0
    floor: float = THROUGHPUT_FLOOR
    slots: int = 0
    acked_slots: int = 0
    acked_throughput: float = 0.0
    acked_sum: float = 0.0
    total_sum: float = 0.0
    pending: deque = field(default_factory=deque)
    scheduled: int = 0
    outages: int = 0

    @property
    def nu(self) -> int:
        return len(self.pending)

    @property
    def w0_n(self) -> float:
        """w0 * N at the next decision: rate sum over acknowledged slots."""
        return self.acked_sum

    def known_throughput(self) -> float:
        """Latest acknowledged throughput T[N-delay-1], floored."""
        if self.acked_slots == 0:
            return self.floor
        return max(self.acked_throughput, self.floor)

    def throughput(self) -> float:
        """Actual throughput T[N] including unacknowledged slots, floored."""
        if self.slots == 0:
            return self.floor
        return max(self.total_sum / self.slots, self.floor)

    def pending_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        rates = np.array([p.rate for p in self.pending], dtype=float)
        probs = np.array([p.success_prob for p in self.pending], dtype=float)
        return rates, probs


def resolve_and_advance(
    ledger: UserLedger, slot: int, capacity: float, decision: RateDecision | None
) -> UserLedger:
    """Complete slot ``slot`` for this user and surface ACKs that are now due.

    Success means the assigned rate does not exceed the true capacity.
    """
    if slot != ledger.slots + 1:
        raise ValueError(f"expected slot {ledger.slots + 1}, got {slot}")
    ledger.slots = slot
    if decision is not None:
        ok = decision.rate <= capacity
        ledger.pending.append(PendingTx(slot, decision.rate, 1.0 - decision.p_out, ok))
        ledger.scheduled += 1
        ledger.outages += 0 if ok else 1
        ledger.total_sum += decision.rate if ok else 0.0
    while ledger.acked_slots < slot - ledger.delay:
        n = ledger.acked_slots + 1
        gained = 0.0
        if ledger.pending and ledger.pending[0].slot == n:
            tx = ledger.pending.popleft()
            gained = tx.rate if tx.success else 0.0
        ledger.acked_throughput = (n - 1) / n * ledger.acked_throughput + gained / n
        ledger.acked_sum += gained
        ledger.acked_slots = n
    return ledger


def expected_rate(decision: RateDecision) -> float:
    return (1.0 - decision.p_out) * decision.rate


def metric_immediate(r_hat: float, t_prev: float) -> float:
    return r_hat / t_prev


def enumerate_outcomes(rates, probs, cap: int = NU_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All 2^nu success patterns of the pending window.

    Returns arrays (d, P): rate sum and probability of each pattern.
    Pattern m has transmission j successful iff bit j of m is set.
    """
    rates = np.asarray(rates, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if rates.size > cap:
        raise EnumerationLimitError(f"nu={rates.size} exceeds enumeration cap {cap}")
    d = np.zeros(1)
    p = np.ones(1)
    for r, s in zip(rates, probs):
        d = np.concatenate([d, d + r])
        p = np.concatenate([p * (1.0 - s), p * s])
    return d, p


def inverse_throughput_expectation(
    w0_n: float,
    rates,
    probs,
    denom_floor: float = 0.0,
    cap: int = NU_CAP,
    rng: np.random.Generator | None = None,
) -> float:
    """E{1 / max(w0 N + D, floor)} over the pending-outcome distribution.

    Exact enumeration up to ``cap`` pending transmissions, Monte-Carlo
    with FALLBACK_DRAWS draws beyond.
    """
    rates = np.asarray(rates, dtype=float)
    probs = np.asarray(probs, dtype=float)
    # Certain outcomes shift every d_m equally; only uncertain ones branch.
    certain = (probs == 0.0) | (probs == 1.0)
    w0_n = w0_n + float(rates[probs == 1.0].sum())
    rates, probs = rates[~certain], probs[~certain]
    try:
        d, p = enumerate_outcomes(rates, probs, cap)
        return float(np.sum(p / np.maximum(w0_n + d, denom_floor)))
    except EnumerationLimitError:
        if rng is None:
            rng = np.random.default_rng(0)
        hits = rng.random((FALLBACK_DRAWS, rates.size)) < probs
        d = hits @ rates
        return float(np.mean(1.0 / np.maximum(w0_n + d, denom_floor)))


def metric_delayed(
    r_hat: float, ledger: UserLedger, slot: int, rng: np.random.Generator | None = None
) -> float:
    """r_hat * sum_m P_m / (w0 N + d_m) for the decision at ``slot``.

    Denominators are floored at floor * (N - 1), the sum-domain
    counterpart of the throughput floor, so that with no delay this
    metric is (N - 1)^-1 times :func:`metric_immediate`.
    """
    rates, probs = ledger.pending_arrays()
    denom_floor = ledger.floor * max(slot - 1, 1)
    return r_hat * inverse_throughput_expectation(
        ledger.w0_n, rates, probs, denom_floor, rng=rng
    )


def select_user(metrics) -> int:
    """Index of the largest metric; ties go to the lowest index."""
    metrics = np.asarray(metrics, dtype=float)
    if metrics.size == 0:
        raise ValueError("no users to select from")
    return int(np.argmax(metrics))


def utility(throughputs) -> float:
    """PF utility sum_k ln T_k (natural log)."""
    t = np.asarray(throughputs, dtype=float)
    if np.any(t <= 0):
        raise ValueError("throughputs must be positive")
    return float(np.sum(np.log(t)))


@dataclass(frozen=True)
class SchedulerDecision:
    slot: int
    user: int
    metrics: tuple
    decisions: tuple
