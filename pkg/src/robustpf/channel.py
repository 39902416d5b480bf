"""Mean channel gains and temporally correlated Rayleigh fading traces."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

log = logging.getLogger(__name__)

# Above this argument the ascending J0 series loses too many digits to cancellation.
_J0_SERIES_MAX = 12.0
JITTER = 1e-10


@dataclass(frozen=True)
class LinkParams:
    """Large-scale description of one link.

    mean_gain is the linear power gain lambda, coherence_time the 50%
    coherence time in slots, power the transmit power normalized to unit
    noise power.
    """

    mean_gain: float
    coherence_time: float
    power: float

    def __post_init__(self):
        if not self.mean_gain > 0:
            raise ValueError(f"mean_gain must be positive, got {self.mean_gain}")
        if not self.coherence_time > 0:
            raise ValueError(f"coherence_time must be positive, got {self.coherence_time}")
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")

    @property
    def snr(self) -> float:
        """Mean receive SNR rho * lambda (linear)."""
        return self.power * self.mean_gain


@dataclass(frozen=True)
class FadingTrace:
    h: np.ndarray
    link: LinkParams

    def __len__(self):
        return len(self.h)

    def capacity(self) -> np.ndarray:
        """Per-slot capacity log2(1 + rho |h|^2) in bits/s/Hz."""
        return np.log2(1.0 + self.link.power * np.abs(self.h) ** 2)


def pathloss(d, alpha: float, beta: float):
    """Mean gain beta * d^-alpha for distance(s) d in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = beta * d ** (-alpha)
    return float(out) if out.ndim == 0 else out


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Ascending series up to |x| = 12, Hankel asymptotic expansion above.
    """
    x_arr = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    out = np.empty_like(x_arr)
    small = x_arr <= _J0_SERIES_MAX
    out[small] = _j0_series(x_arr[small])
    out[~small] = _j0_asymptotic(x_arr[~small])
    return float(out[0]) if np.ndim(x) == 0 else out


def _j0_series(x: np.ndarray) -> np.ndarray:
    q = -0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for l in range(1, 80):
        term = term * q / (l * l)
        total = total + term
        if np.all(np.abs(term) < 1e-17 * np.maximum(1.0, np.abs(total))):
            break
    return total


def _j0_asymptotic(x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        return x
    # a_k = prod_{j=1..k} (0 - (2j-1)^2) / (k! 8^k); P takes even k, Q odd k.
    p = np.ones_like(x)
    qs = np.zeros_like(x)
    a = 1.0
    prev = np.full_like(x, np.inf)
    for k in range(1, 30):
        a *= -((2 * k - 1) ** 2) / (k * 8.0)
        term = a / x**k
        if np.all(np.abs(term) >= prev):
            break
        prev = np.abs(term)
        if k % 2 == 0:
            p += (-1) ** (k // 2) * term
        else:
            qs += (-1) ** (k // 2) * term
        if np.all(np.abs(term) < 1e-17):
            break
    chi = x - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - qs * np.sin(chi))


@lru_cache(maxsize=1)
def coherence_constant() -> float:
    """Smallest positive q with J0(q) = 0.5, found by bisection."""
    lo, hi = 0.0, 2.0  # J0 is decreasing on [0, 2.4]
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if bessel_j0(mid) > 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def correlation(delta, coherence_time: float):
    """Normalized autocorrelation J0(q * delta / T_c) at lag(s) delta."""
    if not coherence_time > 0:
        raise ValueError(f"coherence_time must be positive, got {coherence_time}")
    if math.isinf(coherence_time):
        d = np.asarray(delta, dtype=float)
        return 1.0 if d.ndim == 0 else np.ones_like(d)
    return bessel_j0(coherence_constant() * np.asarray(delta, dtype=float) / coherence_time)


@lru_cache(maxsize=64)
def _trace_factor(coherence_time: float, n_slots: int) -> np.ndarray:
    """Lower-triangular factor of the normalized Toeplitz covariance."""
    cov = toeplitz(np.atleast_1d(correlation(np.arange(n_slots), coherence_time)))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        log.info(
            "covariance for T_c=%g, N=%d not numerically PD; adding %g diagonal jitter",
            coherence_time, n_slots, JITTER,
        )
        return np.linalg.cholesky(cov + JITTER * np.eye(n_slots))


def standard_fading(coherence_time: float, n_slots: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-power fading vector with the Bessel autocorrelation."""
    if n_slots < 1:
        raise ValueError(f"n_slots must be >= 1, got {n_slots}")
    z = (rng.standard_normal(n_slots) + 1j * rng.standard_normal(n_slots)) / math.sqrt(2.0)
    return _trace_factor(float(coherence_time), int(n_slots)) @ z


def gen_trace(link: LinkParams, n_slots: int, rng: np.random.Generator) -> FadingTrace:
    """Draw h ~ CN(0, lambda * Toeplitz(c[0..N-1])) for one link."""
    h = math.sqrt(link.mean_gain) * standard_fading(link.coherence_time, n_slots, rng)
    h.setflags(write=False)
    return FadingTrace(h=h, link=link)
