"""Standard normal CDF, survival function and quantile.

Thin wrappers over :mod:`scipy.special` so the rest of the package has one
place to get Gaussian tail probabilities that stay accurate far out in the
tails (``ndtr(-40)`` is still a positive double).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def cdf(x):
    """Phi(x). Accepts scalars or arrays."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def sf(x):
    """1 - Phi(x), computed without cancellation."""
    out = special.ndtr(-np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def log_cdf(x):
    out = special.log_ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def quantile(p):
    """Phi^{-1}(p) for p in [0, 1]; +-inf at the endpoints."""
    out = special.ndtri(p)
    return float(out) if np.ndim(out) == 0 else out


def pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - LOG_SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def logpdf(x, mean=0.0):
    x = np.asarray(x, dtype=float) - mean
    out = -0.5 * x * x - LOG_SQRT_2PI
    return float(out) if out.ndim == 0 else out
