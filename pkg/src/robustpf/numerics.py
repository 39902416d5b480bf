"""Special-function kernels for Rician outage computations.

Modified Bessel functions of the first kind are evaluated by their
ascending series.  Beyond a per-order threshold the logarithm of the
series is continued linearly (log-linear tail fit), so every product of
an exponential prefactor with a Bessel value can be formed in the log
domain.  The first-order Marcum Q-function, the conditional Rician pdf
and cdf are built on top, plus a generic bisection inverter.

Two evaluation routes exist for the Marcum function:

* ``"series"`` -- the truncated Bessel series with tail fits, exactly as
  used for look-up table precomputation.
* ``"exact"`` -- the noncentral chi-square survival function (two
  degrees of freedom) from scipy.

``"auto"`` (the default) uses the series wherever its truncation error
is negligible and no tail extrapolation is involved, and the exact route
elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

# Default tail fit per order: the upper fit point X_m is the argument at
# which ln I_m reaches LOG_FIT_CEILING, just under the float64 limit
# ln(1.797e308) = 709.7827, and the lower point sits TAIL_FIT_SPAN below it.  The piecewise
# function therefore equals the series wherever the series is finite.
LOG_FIT_CEILING = 709.78
TAIL_FIT_SPAN = 100.0

# Arguments beyond this are never summed by the "auto" series route.
SERIES_ARG_CAP = 600.0

# scipy's noncentral chi-square loses accuracy beyond about 1e12; above
# this noncentrality the Gaussian limit of the amplitude is used instead.
LARGE_NONCENTRALITY = 1e10

# Series terms beyond order M contribute about exp(-M^2 / (2x)) relative
# to the leading term; 28 e-folds keeps the truncation below 1e-12.
_TRUNCATION_EFOLDS = 28.0

_MAX_SERIES_TERMS = 100_000
_CHUNK = 64


class BesselOverflowError(OverflowError):
    """Direct series evaluation left the float64 range."""


class BracketError(ValueError):
    """Target value is not bracketed by the search interval."""


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation settings for the Marcum/Bessel series.

    ``max_terms`` is the highest Bessel order kept in the Marcum sum;
    ``tol`` the relative increment at which the ascending Bessel series
    stops.
    """

    max_terms: int = 150
    tol: float = 1e-12

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    @property
    def series_limit(self) -> float:
        """Largest Bessel argument for which ``auto`` trusts the series."""
        return min(SERIES_ARG_CAP, self.max_terms**2 / (2.0 * _TRUNCATION_EFOLDS))


DEFAULT_CFG = SeriesConfig()


@dataclass(frozen=True)
class TailFit:
    """Log-linear continuation ln I_m(x) ~ slope * x + intercept for x > threshold."""

    order: int
    threshold: float
    slope: float
    intercept: float

    def log_value(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


# ----------------------------------------------------------------------
# Bessel series
# ----------------------------------------------------------------------


def bessel_i(m: int, x: float, cfg: SeriesConfig = DEFAULT_CFG) -> float:
    """Modified Bessel function I_m(x) from its ascending series.

    Terms (x/2)^(2l+m) / (l! Gamma(l+m+1)) are accumulated until the
    relative increment drops below ``cfg.tol`` past the peak term.

    Raises
    ------
    BesselOverflowError
        If a term or the partial sum is not representable in float64.
    """
    if m < 0 or int(m) != m:
        raise ValueError(f"order must be a nonnegative integer, got {m}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    m, x = int(m), float(x)
    if x == 0:
        return 1.0 if m == 0 else 0.0

    half = 0.5 * x
    log_t0 = m * math.log(half) - math.lgamma(m + 1)
    if log_t0 > 709.0:
        raise BesselOverflowError(f"I_{m}({x}) leading term overflows")
    term = math.exp(log_t0)
    total = term
    q = half * half
    for l in range(1, _MAX_SERIES_TERMS):
        prev = term
        term = term * (q / (l * (l + m)))
        total += term
        if math.isinf(total) or math.isinf(term):
            raise BesselOverflowError(f"I_{m}({x}) overflows float64")
        if term < prev and term <= cfg.tol * total:
            break
    return total


def _log_series_orders(orders: np.ndarray, x: float, tol: float) -> np.ndarray:
    """ln I_m(x) for an array of orders, summed in the log domain."""
    orders = np.asarray(orders, dtype=float)
    if 0.5 * x == 0:  # also catches subnormal x
        return np.where(orders == 0, 0.0, -np.inf)
    log_half = math.log(0.5 * x)
    running_max = np.full(orders.shape, -np.inf)
    scaled = np.zeros(orders.shape)
    l0 = 0
    while l0 < _MAX_SERIES_TERMS:
        l = np.arange(l0, l0 + _CHUNK, dtype=float)
        log_t = (
            (2.0 * l[None, :] + orders[:, None]) * log_half
            - gammaln(l[None, :] + 1.0)
            - gammaln(l[None, :] + orders[:, None] + 1.0)
        )
        chunk_max = log_t.max(axis=1)
        new_max = np.maximum(running_max, chunk_max)
        scaled = scaled * np.exp(running_max - new_max) + np.exp(
            log_t - new_max[:, None]
        ).sum(axis=1)
        running_max = new_max
        last = log_t[:, -1]
        peak_passed = (l0 + _CHUNK) > 0.5 * x
        if peak_passed and np.all(last - (running_max + np.log(scaled)) < math.log(tol)):
            break
        l0 += _CHUNK
    return running_max + np.log(scaled)


def log_bessel_i_series(m: int, x: float, cfg: SeriesConfig = DEFAULT_CFG) -> float:
    """ln I_m(x) by the ascending series, summed without leaving log space."""
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    return float(_log_series_orders(np.array([m]), float(x), cfg.tol)[0])


def fit_tail(m: int, x1: float, x2: float, cfg: SeriesConfig = DEFAULT_CFG) -> TailFit:
    """Fit ln I_m through the points x1 < x2 and continue it linearly past x2.

    Raises
    ------
    ValueError
        If the interval is empty or reversed.
    BesselOverflowError
        If the direct series cannot be evaluated at ``x2``.
    """
    if not (0 < x1 < x2):
        raise ValueError(f"need 0 < x1 < x2, got x1={x1}, x2={x2}")
    j1 = bessel_i(m, x1, cfg)
    j2 = bessel_i(m, x2, cfg)
    slope = (math.log(j2) - math.log(j1)) / (x2 - x1)
    intercept = math.log(j1) - slope * x1
    return TailFit(order=int(m), threshold=float(x2), slope=slope, intercept=intercept)


@lru_cache(maxsize=1024)
def overflow_threshold(m: int) -> float:
    """Argument X_m (to within 1e-6) where ln I_m(X_m) = LOG_FIT_CEILING."""
    lo, hi = 0.0, 720.0
    while log_bessel_i_series(m, hi) < LOG_FIT_CEILING:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if log_bessel_i_series(m, mid) < LOG_FIT_CEILING:
            lo = mid
        else:
            hi = mid
    return lo


@lru_cache(maxsize=1024)
def default_tail_fit(m: int) -> TailFit:
    x2 = overflow_threshold(int(m))
    return fit_tail(m, x2 - TAIL_FIT_SPAN, x2)


def bessel_i_stable(
    m: int, x: float, fit: TailFit | None = None, cfg: SeriesConfig = DEFAULT_CFG
) -> float:
    """Logarithm of the piecewise Bessel approximation.

    Returns ln I_m(x) for x <= threshold and ``slope*x + intercept``
    beyond it.  The result is a log value so it can be combined with
    large negative exponents without overflow.
    """
    if fit is None:
        fit = default_tail_fit(int(m))
    elif fit.order != m:
        raise ValueError(f"tail fit is for order {fit.order}, not {m}")
    if x <= fit.threshold:
        return log_bessel_i_series(m, x, cfg)
    return float(fit.log_value(x))


def _log_bessel_stable_orders(n_orders: int, x: float, cfg: SeriesConfig) -> np.ndarray:
    """Vector of ln J~_m(x) for m = 0 .. n_orders-1."""
    orders = np.arange(n_orders)
    # Thresholds grow with the order, so order 0 is the first to need a fit.
    if x <= overflow_threshold(0):
        return _log_series_orders(orders, x, cfg.tol)
    out = np.empty(n_orders)
    fits = [default_tail_fit(int(m)) for m in orders]
    beyond = np.array([x > f.threshold for f in fits])
    out[beyond] = [f.slope * x + f.intercept for f, b in zip(fits, beyond) if b]
    if not beyond.all():
        out[~beyond] = _log_series_orders(orders[~beyond], x, cfg.tol)
    return out


# ----------------------------------------------------------------------
# Marcum Q and the Rician distribution
# ----------------------------------------------------------------------


def _marcum_series(alpha: float, beta: float, cfg: SeriesConfig) -> tuple[float, float]:
    """(Q, 1-Q) from the Bessel series; the smaller side is summed directly.

    For beta >= alpha the defining sum over (alpha/beta)^m I_m converges
    geometrically.  For beta < alpha the complementary form
    1 - Q = exp(-(a^2+b^2)/2) sum_{m>=1} (beta/alpha)^m I_m(alpha*beta)
    is used instead, so the ratio never exceeds one.
    """
    x = alpha * beta
    log_pref = -0.5 * (alpha * alpha + beta * beta)
    log_j = _log_bessel_stable_orders(cfg.max_terms + 1, x, cfg)
    m = np.arange(cfg.max_terms + 1)
    if beta >= alpha:
        q = math.exp(min(logsumexp(log_pref + m * (math.log(alpha) - math.log(beta)) + log_j), 0.0))
        return q, 1.0 - q
    log_terms = log_pref + m[1:] * (math.log(beta) - math.log(alpha)) + log_j[1:]
    f = math.exp(min(logsumexp(log_terms), 0.0))
    return 1.0 - f, f


def _marcum_exact(alpha: float, beta: float) -> tuple[float, float]:
    if alpha * alpha > LARGE_NONCENTRALITY:
        z = _gaussian_offset(beta, alpha)
        return float(stats.norm.sf(z)), float(stats.norm.cdf(z))
    nc = alpha * alpha
    b2 = beta * beta
    return float(stats.ncx2.sf(b2, 2, nc)), float(stats.ncx2.cdf(b2, 2, nc))


def _gaussian_offset(beta, alpha):
    """Standardized beta under the Gaussian limit of a Rician amplitude.

    For large alpha the amplitude is close to N(alpha + 1/(2 alpha), 1).
    """
    return beta - alpha - 0.5 / alpha


def _marcum_pair(alpha: float, beta: float, cfg: SeriesConfig, method: str):
    if alpha < 0 or beta < 0:
        raise ValueError(f"alpha and beta must be nonnegative, got {alpha}, {beta}")
    if beta == 0:
        return 1.0, 0.0
    if alpha == 0:
        f = -math.expm1(-0.5 * beta * beta)
        return 1.0 - f, f
    if method == "series":
        return _marcum_series(alpha, beta, cfg)
    if method == "exact":
        return _marcum_exact(alpha, beta)
    if method == "auto":
        if alpha * beta <= cfg.series_limit:
            return _marcum_series(alpha, beta, cfg)
        return _marcum_exact(alpha, beta)
    raise ValueError(f"unknown method {method!r}")


def marcum_q1(
    alpha: float, beta: float, cfg: SeriesConfig = DEFAULT_CFG, method: str = "auto"
) -> float:
    """First-order Marcum Q-function Q_1(alpha, beta), clamped to [0, 1]."""
    return _marcum_pair(float(alpha), float(beta), cfg, method)[0]


def rician_pdf(g, g_hat: float, eps: float):
    """Density of |h| given h ~ CN(h_hat, eps) with |h_hat| = g_hat.

    Accepts scalar or array ``g``; evaluated in the log domain.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    g_arr = np.atleast_1d(np.asarray(g, dtype=float))
    out = np.zeros_like(g_arr)
    pos = g_arr > 0
    for i in np.flatnonzero(pos):
        gi = g_arr[i]
        arg = 2.0 * gi * g_hat / eps
        log_f = (
            math.log(2.0 * gi / eps)
            - (gi * gi + g_hat * g_hat) / eps
            + bessel_i_stable(0, arg)
        )
        out[i] = math.exp(log_f)
    if np.ndim(g) == 0:
        return float(out[0])
    return out


def rician_cdf(
    b: float,
    g_hat: float,
    eps: float,
    cfg: SeriesConfig = DEFAULT_CFG,
    method: str = "auto",
) -> float:
    """P(|h| <= b) for h ~ CN(h_hat, eps), |h_hat| = g_hat."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if b < 0:
        raise ValueError(f"b must be nonnegative, got {b}")
    if math.isinf(b):
        return 1.0
    scale = math.sqrt(2.0 / eps)
    return _marcum_pair(g_hat * scale, b * scale, cfg, method)[1]


def rician_cdf_exact(b, g_hat, eps):
    """Vectorized conditional Rician cdf via the noncentral chi-square law."""
    b, g_hat, eps = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (b, g_hat, eps)))
    nc = 2.0 * g_hat * g_hat / eps
    big = nc > LARGE_NONCENTRALITY
    out = np.empty(b.shape)
    out[~big] = stats.ncx2.cdf(2.0 * b[~big] ** 2 / eps[~big], 2, nc[~big])
    if np.any(big):
        scale = np.sqrt(2.0 / eps[big])
        out[big] = stats.norm.cdf(_gaussian_offset(b[big] * scale, g_hat[big] * scale))
    return out[()] if out.ndim == 0 else out


def rician_quantile_exact(p, g_hat, eps):
    """Inverse of :func:`rician_cdf_exact` in its amplitude argument."""
    p = np.asarray(p, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    eps = np.asarray(eps, dtype=float)
    p, g_hat, eps = np.broadcast_arrays(p, g_hat, eps)
    nc = 2.0 * g_hat * g_hat / eps
    big = nc > LARGE_NONCENTRALITY
    q = np.empty(nc.shape)
    small = ~big
    # ncx2 with zero noncentrality is the central chi-square.
    q[small] = np.where(
        nc[small] > 0,
        stats.ncx2.ppf(p[small], 2, np.maximum(nc[small], 1e-300)),
        stats.chi2.ppf(p[small], 2),
    )
    out = np.sqrt(q * eps / 2.0)
    if np.any(big):
        alpha = np.sqrt(nc[big])
        beta = alpha + 0.5 / alpha + stats.norm.ppf(p[big])
        out[big] = beta * np.sqrt(eps[big] / 2.0)
    return out[()] if out.ndim == 0 else out


# ----------------------------------------------------------------------
# Monotone inversion
# ----------------------------------------------------------------------


def invert_monotone(
    f: Callable[[float], float], target: float, lo: float, hi: float, tol: float
) -> float:
    """Bisection for x in [lo, hi] with f(x) = target, f nondecreasing.

    Returns the lower end of the final bracket, so f(result) <= target
    holds and the root lies within ``tol`` above the result.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo <= target <= f_hi):
        raise BracketError(
            f"target {target} outside [f(lo), f(hi)] = [{f_lo}, {f_hi}]"
        )
    if f_lo == target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo
