"""Scalar and vectorised probability primitives.

Everything is in nats. The array-level helpers (``norm_logpdf``,
``norm_logsf``, ...) accept numpy arrays and broadcast; the parameter-object
functions (``gaussian_log_pdf`` and friends) are the validated scalar API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
HALF_LOG_2PI = 0.5 * LOG_2PI
SIGMA_FLOOR = 1e-6

# Above this z-score the survival function is evaluated through the Mills
# ratio continued fraction instead of erfc.
_TAIL_Z = 6.0
_CF_TERMS = 60
_SQRT1_2 = 1.0 / math.sqrt(2.0)


class DomainError(ValueError):
    """Raised for invalid distribution parameters or non-finite inputs."""


@dataclass(frozen=True)
class GaussianParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError(f"non-finite Gaussian parameters mu={self.mu}, sigma={self.sigma}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be strictly positive, got {self.sigma}")


@dataclass(frozen=True)
class BernoulliParam:
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise DomainError(f"Bernoulli probability must lie in [0, 1], got {self.lam}")


# ---------------------------------------------------------------------------
# array-level helpers
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _log_upper_tail(z):
    """log(1 - Phi(z)) for z >= _TAIL_Z via the Mills-ratio continued fraction."""
    t = z
    for k in range(_CF_TERMS, 0, -1):
        t = z + k / t
    return -0.5 * z * z - HALF_LOG_2PI - math.log(t)


@numba.njit(cache=True)
def logsf_scalar(z):
    if z != z:
        return z
    if z > _TAIL_Z:
        return _log_upper_tail(z)
    if z < -_TAIL_Z:
        # Phi(z) is tiny here; keep it (possibly subnormal) rather than
        # letting erfc flush it to zero
        return math.log1p(-math.exp(_log_upper_tail(-z)))
    if z < 0.0:
        return math.log1p(-0.5 * math.erfc(-z * _SQRT1_2))
    return math.log(0.5 * math.erfc(z * _SQRT1_2))


@numba.vectorize(["float64(float64)"], cache=True)
def _logsf_ufunc(z):
    return logsf_scalar(z)


def std_norm_logsf(z):
    """log(1 - Phi(z)) for the standard normal, accurate in both tails.

    Never forms ``1 - Phi``: the centre goes through erfc (with log1p for
    z < 0, where the survival probability is close to one) and both tails
    beyond |z| = 6 through the Mills-ratio continued fraction.
    """
    z = np.asarray(z, dtype=np.float64)
    out = _logsf_ufunc(z)
    return float(out) if z.ndim == 0 else out


def std_norm_logcdf(z):
    """log Phi(z) via the survival function of -z."""
    return std_norm_logsf(-np.asarray(z, dtype=np.float64))


def norm_logpdf(y, mu, sigma):
    r = (np.asarray(y, dtype=np.float64) - mu) / sigma
    return -0.5 * r * r - np.log(sigma) - HALF_LOG_2PI


def norm_logsf(y, mu, sigma):
    return std_norm_logsf((np.asarray(y, dtype=np.float64) - mu) / sigma)


def softplus_array(x):
    x = np.asarray(x, dtype=np.float64)
    # max(x, 0) + log1p(exp(-|x|)) never overflows
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def xlogx(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def binary_entropy_array(p):
    p = np.asarray(p, dtype=np.float64)
    return -(xlogx(p) + xlogx(1.0 - p))


# ---------------------------------------------------------------------------
# validated scalar API
# ---------------------------------------------------------------------------


def _check_y(y: float) -> float:
    y = float(y)
    if not math.isfinite(y):
        raise DomainError(f"non-finite observation {y}")
    return y


def gaussian_log_pdf(y: float, p: GaussianParams) -> float:
    """Log density of ``N(p.mu, p.sigma**2)`` at ``y``."""
    y = _check_y(y)
    r = (y - p.mu) / p.sigma
    return -0.5 * r * r - math.log(p.sigma) - HALF_LOG_2PI


def gaussian_log_survival(y: float, p: GaussianParams) -> float:
    """``log(1 - Phi((y - mu) / sigma))``, finite deep into both tails."""
    y = _check_y(y)
    return float(logsf_scalar((y - p.mu) / p.sigma))


def gaussian_log_cdf(y: float, p: GaussianParams) -> float:
    y = _check_y(y)
    return float(logsf_scalar((p.mu - y) / p.sigma))


def binary_entropy(p: BernoulliParam | float) -> float:
    lam = p.lam if isinstance(p, BernoulliParam) else BernoulliParam(float(p)).lam
    # f(p) + f(1 - p) keeps H(p) == H(1 - p) bitwise whenever 1 - (1 - p) == p
    return -(_xlogx(lam) + _xlogx(1.0 - lam))


def _xlogx(p: float) -> float:
    return p * math.log(p) if p > 0.0 else 0.0


def softplus(x: float) -> float:
    x = float(x)
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def gaussian_entropy_closed_form(p: GaussianParams) -> float:
    return 0.5 * (LOG_2PI + 1.0) + math.log(p.sigma)
