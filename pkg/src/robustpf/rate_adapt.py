"""Rate adaptation under a target outage probability.

Robust adaptation picks the largest rate whose conditional outage
probability, given the estimate amplitude g_hat and error variance eps,
equals the target.  The non-robust baseline assigns a backed-off
Shannon rate from g_hat.  Look-up tables precompute the robust rule on
an amplitude grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .numerics import (
    DEFAULT_CFG,
    SeriesConfig,
    invert_monotone,
    rician_cdf,
    rician_cdf_exact,
    rician_quantile_exact,
)

DEFAULT_TOL = 1e-4
MAX_RATE = 64.0


class RateBracketError(RuntimeError):
    """Upper rate bracket grew past MAX_RATE without reaching the target."""


@dataclass(frozen=True)
class RateDecision:
    rate: float
    p_out: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")
        if not 0.0 <= self.p_out <= 1.0:
            raise ValueError(f"p_out must lie in [0, 1], got {self.p_out}")

    @property
    def expected_rate(self) -> float:
        return (1.0 - self.p_out) * self.rate


def threshold_amplitude(rate, rho: float):
    """Amplitude b with log2(1 + rho b^2) = rate."""
    return np.sqrt(np.expm1(np.asarray(rate, dtype=float) * math.log(2.0)) / rho)


def capacity(g, rho: float):
    return np.log2(1.0 + rho * np.asarray(g, dtype=float) ** 2)


def outage_prob(
    rate: float,
    g_hat: float,
    eps: float,
    rho: float,
    cfg: SeriesConfig = DEFAULT_CFG,
    method: str = "auto",
) -> float:
    """P(log2(1 + rho g^2) < rate | g_hat) for the Rician conditional model.

    With eps = 0 the channel is known and the result is a step at the
    capacity of g_hat.
    """
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    if rate == 0:
        return 0.0
    if eps == 0:
        return 0.0 if rate <= float(capacity(g_hat, rho)) else 1.0
    b = float(threshold_amplitude(rate, rho))
    return rician_cdf(b, g_hat, eps, cfg, method)


def robust_rate(
    g_hat: float,
    eps: float,
    rho: float,
    p_target: float,
    tol: float = DEFAULT_TOL,
    cfg: SeriesConfig = DEFAULT_CFG,
    method: str = "auto",
) -> RateDecision:
    """Largest rate (to within ``tol``) whose outage does not exceed ``p_target``."""
    if not 0.0 < p_target < 1.0:
        raise ValueError(f"p_target must lie in (0, 1), got {p_target}")
    if eps == 0:
        return RateDecision(float(capacity(g_hat, rho)), 0.0)

    def f(r):
        return outage_prob(r, g_hat, eps, rho, cfg, method)

    hi = 1.0
    while f(hi) < p_target:
        hi *= 2.0
        if hi > MAX_RATE:
            raise RateBracketError(
                f"no rate up to {MAX_RATE} reaches outage {p_target} "
                f"(g_hat={g_hat}, eps={eps}, rho={rho})"
            )
    rate = invert_monotone(f, p_target, 0.0, hi, tol)
    return RateDecision(rate, f(rate))


def nonrobust_rate(
    g_hat: float,
    rho: float,
    backoff: float = 1.0,
    eps: float = 0.0,
    cfg: SeriesConfig = DEFAULT_CFG,
) -> RateDecision:
    """backoff * log2(1 + rho g_hat^2); p_out is the model outage of that rate."""
    if not 0.0 < backoff <= 1.0:
        raise ValueError(f"backoff must lie in (0, 1], got {backoff}")
    rate = backoff * float(capacity(g_hat, rho))
    return RateDecision(rate, outage_prob(rate, g_hat, eps, rho, cfg))


# ----------------------------------------------------------------------
# Look-up tables
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RateLut:
    grid: np.ndarray
    rates: np.ndarray
    eps: float
    rho: float
    p_target: float
    mean_gain: float = 1.0

    @property
    def snr(self) -> float:
        return self.rho * self.mean_gain


def enforce_monotone(rates) -> np.ndarray:
    """Clamp right to left so no rate exceeds any rate at a larger amplitude."""
    rates = np.asarray(rates, dtype=float)
    return np.minimum.accumulate(rates[::-1])[::-1]


def default_lut_grid(mean_gain: float = 1.0, n: int = 512) -> np.ndarray:
    root = math.sqrt(mean_gain)
    return np.geomspace(1e-3 * root, 6.0 * root, n)


def build_lut(
    grid,
    eps: float,
    rho: float,
    p_target: float,
    tol: float = DEFAULT_TOL,
    mean_gain: float = 1.0,
    cfg: SeriesConfig = DEFAULT_CFG,
) -> RateLut:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty strictly increasing 1-D array")
    raw = np.array([robust_rate(g, eps, rho, p_target, tol, cfg).rate for g in grid])
    return RateLut(grid, enforce_monotone(raw), eps, rho, p_target, mean_gain)


def lut_rate(lut: RateLut, g_hat: float, cfg: SeriesConfig = DEFAULT_CFG) -> RateDecision:
    """Rate at the largest grid point not above g_hat; zero below the grid."""
    i = int(np.searchsorted(lut.grid, g_hat, side="right")) - 1
    rate = 0.0 if i < 0 else float(lut.rates[i])
    return RateDecision(rate, outage_prob(rate, g_hat, lut.eps, lut.rho, cfg))


def write_lut_csv(lut: RateLut, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(
                f"# snr={lut.snr!r} eps={lut.eps!r} p_target={lut.p_target!r} "
                f"rho={lut.rho!r} mean_gain={lut.mean_gain!r}\n"
            )
            w = csv.writer(fh)
            w.writerow(["g_hat", "rate"])
            for g, r in zip(lut.grid, lut.rates):
                w.writerow([repr(float(g)), repr(float(r))])
    except OSError as exc:
        raise OSError(f"cannot write LUT to {path}: {exc}") from exc


def read_lut_csv(path) -> RateLut:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing parameter header line")
        params = dict(item.split("=", 1) for item in header[1:].split())
        rows = list(csv.DictReader(fh))
    grid = np.array([float(r["g_hat"]) for r in rows])
    rates = np.array([float(r["rate"]) for r in rows])
    return RateLut(
        grid,
        rates,
        eps=float(params["eps"]),
        rho=float(params["rho"]),
        p_target=float(params["p_target"]),
        mean_gain=float(params.get("mean_gain", 1.0)),
    )


# ----------------------------------------------------------------------
# Vectorized robust rates
# ----------------------------------------------------------------------


class UnitQuantileTable:
    """Outage threshold of a unit-variance Rician amplitude, tabulated.

    With s = g_hat / sqrt(eps) the robust threshold amplitude is
    b = sqrt(eps) * y(s), where y solves P(|s + n| <= y) = p_target for
    n ~ CN(0, 1).  y is tabulated on a uniform s-grid with the Bessel
    series (where the series is trusted) and interpolated with a
    monotone cubic; larger s use the exact noncentral chi-square inverse.
    """

    def __init__(self, p_target: float, step: float = 0.05, cfg: SeriesConfig = DEFAULT_CFG):
        if not 0.0 < p_target < 1.0:
            raise ValueError(f"p_target must lie in (0, 1), got {p_target}")
        self.p_target = p_target
        # Bessel argument at the grid edge is 2*s*y < 2*s^2 <= series_limit.
        self.s_max = math.floor(math.sqrt(cfg.series_limit / 2.0) / step) * step
        self.s_grid = np.arange(0.0, self.s_max + 0.5 * step, step)
        y = np.empty_like(self.s_grid)
        for i, s in enumerate(self.s_grid):
            y[i] = brentq(
                lambda v: rician_cdf(v, s, 1.0, cfg, "series") - p_target,
                0.0,
                s + 12.0,
                xtol=1e-13,
                rtol=1e-13,
            )
        self.y_grid = y
        self._interp = PchipInterpolator(self.s_grid, y)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        inside = s <= self.s_max
        out[inside] = self._interp(s[inside])
        if np.any(~inside):
            out[~inside] = rician_quantile_exact(self.p_target, s[~inside], 1.0)
        return out


_TABLES: dict[tuple[float, float, SeriesConfig], UnitQuantileTable] = {}


def unit_quantile_table(p_target: float, step: float = 0.05, cfg: SeriesConfig = DEFAULT_CFG):
    key = (p_target, step, cfg)
    if key not in _TABLES:
        _TABLES[key] = UnitQuantileTable(p_target, step, cfg)
    return _TABLES[key]


def robust_rates(g_hat, eps, rho: float, p_target: float) -> np.ndarray:
    """Vectorized robust rates for arrays of amplitudes (eps may be an array)."""
    g_hat = np.asarray(g_hat, dtype=float)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), g_hat.shape)
    rates = capacity(g_hat, rho).astype(float)
    pos = eps > 0
    if np.any(pos):
        table = unit_quantile_table(p_target)
        root = np.sqrt(eps[pos])
        b = root * table(g_hat[pos] / root)
        rates[pos] = np.log2(1.0 + rho * b * b)
    return rates


def outage_probs(rates, g_hat, eps, rho: float) -> np.ndarray:
    """Vectorized model outage (exact route); step function where eps == 0."""
    rates = np.asarray(rates, dtype=float)
    g_hat = np.broadcast_to(np.asarray(g_hat, dtype=float), rates.shape)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), rates.shape)
    out = np.where(rates <= capacity(g_hat, rho), 0.0, 1.0)
    pos = (eps > 0) & (rates > 0)
    if np.any(pos):
        b = threshold_amplitude(rates[pos], rho)
        out[pos] = rician_cdf_exact(b, g_hat[pos], eps[pos])
    out[rates == 0] = 0.0
    return out
