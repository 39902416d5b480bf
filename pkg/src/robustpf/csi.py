"""Transmitter-side channel estimates and their error variance.

The estimate is modeled as an MMSE prediction from ``window`` past
pilot observations taken ``delay`` slots before transmission.  Only the
resulting error variance enters the rest of the system; the estimate
itself is synthesized so that h = h_hat + e with e ~ CN(0, eps)
independent of h_hat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .channel import FadingTrace, correlation


@dataclass(frozen=True)
class CsiConfig:
    """Parameters of the CSI impairment model.

    ``quant_bits=None`` means unquantized feedback.  ``snr`` is the
    per-link mean SNR rho * lambda, which sets the pilot observation
    noise.
    """

    delay: int
    coherence_time: float
    snr: float
    mean_gain: float = 1.0
    window: int = 1
    pilots: int = 8
    quant_bits: float | None = None
    epsilon_formula: str = "mmse"

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError(f"delay must be >= 0, got {self.delay}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.pilots < 1:
            raise ValueError(f"pilots must be >= 1, got {self.pilots}")
        if self.quant_bits is not None and not self.quant_bits > 0:
            raise ValueError(f"quant_bits must be positive, got {self.quant_bits}")
        if self.epsilon_formula not in ("mmse", "literal"):
            raise ValueError(f"unknown epsilon_formula {self.epsilon_formula!r}")

    @property
    def quant_factor(self) -> float:
        """1 - 2^-Q, equal to one without quantization."""
        if self.quant_bits is None or math.isinf(self.quant_bits):
            return 1.0
        return 1.0 - 2.0 ** (-self.quant_bits)


@dataclass(frozen=True)
class CsiView:
    h_hat: complex
    eps: float
    slot: int

    @property
    def g_hat(self) -> float:
        return abs(self.h_hat)


def cov_vector(cfg: CsiConfig) -> np.ndarray:
    """Correlations between the channel at transmission and each observation."""
    lags = cfg.delay + np.arange(cfg.window)
    return np.atleast_1d(correlation(lags, cfg.coherence_time))


def cov_matrix(cfg: CsiConfig) -> np.ndarray:
    """Toeplitz correlation matrix of the ``window`` observations."""
    return toeplitz(np.atleast_1d(correlation(np.arange(cfg.window), cfg.coherence_time)))


def error_variance(cfg: CsiConfig) -> float:
    """Error variance eps of the channel estimate.

    Default (``"mmse"``)::

        eps = lambda * (1 - (1 - 2^-Q) * c^H (C + I / (snr * N_P))^-1 c)

    clamped to [0, lambda].  ``"literal"`` evaluates
    (1 - 2^-Q) * c^H (C + snr * N_P * I)^-1 c as written, for comparison.
    """
    c = cov_vector(cfg)
    cmat = cov_matrix(cfg)
    eye = np.eye(cfg.window)
    if cfg.epsilon_formula == "literal":
        explained = c @ np.linalg.solve(cmat + cfg.snr * cfg.pilots * eye, c)
        return float(cfg.quant_factor * explained)
    if math.isinf(cfg.snr) or math.isinf(cfg.pilots):
        loading = 0.0
    else:
        loading = 1.0 / (cfg.snr * cfg.pilots)
    explained = c @ np.linalg.solve(cmat + loading * eye, c)
    eps = cfg.mean_gain * (1.0 - cfg.quant_factor * explained)
    return float(min(max(eps, 0.0), cfg.mean_gain))


def estimate_from_noise(h, eps: float, mean_gain: float, noise):
    """h_hat = ((lambda - eps)/lambda) * (h + v), v = sqrt(eps*lambda/(lambda-eps)) * noise.

    ``noise`` must be standard complex Gaussian (unit variance), shaped
    like ``h``.  Works elementwise on arrays; eps may be an array too.
    """
    h = np.asarray(h)
    eps = np.asarray(eps, dtype=float)
    lam = np.asarray(mean_gain, dtype=float)
    shrink = (lam - eps) / lam
    with np.errstate(divide="ignore", invalid="ignore"):
        noise_std = np.sqrt(np.where(shrink > 0, eps * lam / (lam - eps), 0.0))
    out = shrink * (h + noise_std * noise)
    out = np.where(eps <= 0, h, out)
    out = np.where(eps >= lam, 0.0, out)
    return out


def standard_complex_normal(rng: np.random.Generator, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def synthesize_view(
    trace: FadingTrace, slot: int, cfg: CsiConfig, rng: np.random.Generator
) -> CsiView:
    """Estimate of ``trace.h[slot]`` consistent with the error variance of ``cfg``."""
    lam = trace.link.mean_gain
    # cfg.mean_gain only scales eps; the trace owns the actual lambda.
    eps = error_variance(cfg) / cfg.mean_gain * lam
    h = trace.h[slot]
    h_hat = complex(estimate_from_noise(h, eps, lam, standard_complex_normal(rng)))
    return CsiView(h_hat=h_hat, eps=eps, slot=slot)
