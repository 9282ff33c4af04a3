"""Training objectives.

Three per-sample terms, each a negative log-likelihood in nats:

* ``censored_nll_term``: Tobit likelihood of the latent head, density for
  uncensored rows and survival mass for censored ones,
* ``observed_nll_term``: Gaussian NLL of the observed head for every row,
* ``bce_term``: Bernoulli cross entropy of the uncensored-probability head.

The ``*_raw`` variants work on a batch of raw (pre-transform) network
outputs of shape ``(N, 5)`` and also return the gradient with respect to
those outputs, which is what :func:`cenal.neural.grad` back-propagates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .data import CensoredSample
from .heads import HeadOutput
from .prob import (
    HALF_LOG_2PI,
    SIGMA_FLOOR,
    GaussianParams,
    gaussian_log_pdf,
    gaussian_log_survival,
    logsf_scalar,
    softplus_array,
    std_norm_logsf,
)


class LossError(FloatingPointError):
    """A loss term evaluated to a non-finite value."""

    def __init__(self, message: str, sample_index: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index


@dataclass(frozen=True)
class LossBreakdown:
    censored_nll: float
    observed_nll: float
    bce: float
    total: float


# ---------------------------------------------------------------------------
# per-sample terms on HeadOutput
# ---------------------------------------------------------------------------


def censored_nll_term(h: HeadOutput, s: CensoredSample) -> float:
    # for censored rows y holds the threshold z
    p = GaussianParams(float(h.mu_star), float(h.sigma_star))
    if s.l:
        return -gaussian_log_pdf(s.y, p)
    return -gaussian_log_survival(s.y, p)


def observed_nll_term(h: HeadOutput, s: CensoredSample) -> float:
    return -gaussian_log_pdf(s.y, GaussianParams(float(h.mu_obs), float(h.sigma_obs)))


def bce_term(h: HeadOutput, s: CensoredSample) -> float:
    if h.lam_logit is not None:
        a = float(h.lam_logit)
        return float(softplus_array(a)) - (a if s.l else 0.0)
    lam = float(h.lam)
    if s.l:
        return -math.log(lam) if lam > 0 else math.inf
    return -math.log1p(-lam) if lam < 1 else math.inf


def total_loss(batch) -> LossBreakdown:
    """Batch means of the three terms and their sum.

    ``batch`` is a non-empty sequence of ``(HeadOutput, CensoredSample)``.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("total_loss needs a non-empty batch")
    sums = [0.0, 0.0, 0.0]
    for i, (h, s) in enumerate(batch):
        terms = (censored_nll_term(h, s), observed_nll_term(h, s), bce_term(h, s))
        if not all(math.isfinite(t) for t in terms):
            raise LossError(f"non-finite loss term {terms} at sample {i}", sample_index=i)
        for j, t in enumerate(terms):
            sums[j] += t
    n = len(batch)
    c, o, b = (v / n for v in sums)
    return LossBreakdown(c, o, b, c + o + b)


# ---------------------------------------------------------------------------
# vectorised value + gradient on raw outputs
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _softplus_and_sigmoid(a):
    e = math.exp(-abs(a))
    sp = max(a, 0.0) + math.log1p(e)
    sg = 1.0 / (1.0 + e) if a >= 0 else e / (1.0 + e)
    return sp, sg


@numba.njit(cache=True)
def _scale(raw):
    """Positive scale from a raw output and its derivative (zero on the floor)."""
    sp, sg = _softplus_and_sigmoid(raw)
    if sp > SIGMA_FLOOR:
        return sp, sg
    return SIGMA_FLOOR, 0.0


@numba.njit(cache=True)
def _loss_kernel(out, y, l, wc, wo, wb):
    """Per-row weighted sum of the three terms and its gradient w.r.t. ``out``."""
    n = out.shape[0]
    v = np.zeros(n)
    g = np.zeros((n, 5))
    for i in range(n):
        yi = y[i]
        if wc != 0.0:
            sig, dsig = _scale(out[i, 1])
            r = (yi - out[i, 0]) / sig
            if l[i]:
                v[i] += wc * (0.5 * r * r + math.log(sig) + HALF_LOG_2PI)
                g[i, 0] += wc * (-r / sig)
                g[i, 1] += wc * (1.0 - r * r) / sig * dsig
            else:
                logsf = logsf_scalar(r)
                # hazard phi(r) / (1 - Phi(r)), formed in log space to survive the tails
                hazard = math.exp(-0.5 * r * r - HALF_LOG_2PI - logsf)
                v[i] -= wc * logsf
                g[i, 0] += wc * (-hazard / sig)
                g[i, 1] += wc * (-hazard * r / sig) * dsig
        if wo != 0.0:
            sig, dsig = _scale(out[i, 3])
            r = (yi - out[i, 2]) / sig
            v[i] += wo * (0.5 * r * r + math.log(sig) + HALF_LOG_2PI)
            g[i, 2] += wo * (-r / sig)
            g[i, 3] += wo * (1.0 - r * r) / sig * dsig
        if wb != 0.0:
            a = out[i, 4]
            sp, sg = _softplus_and_sigmoid(a)
            lf = 1.0 if l[i] else 0.0
            v[i] += wb * (sp - lf * a)
            g[i, 4] += wb * (sg - lf)
    return v, g


def _raw_call(out, y, l, wc, wo, wb):
    out = np.ascontiguousarray(out, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    l = np.ascontiguousarray(l, dtype=np.bool_)
    return _loss_kernel(out, y, l, wc, wo, wb)


def censored_nll_raw(out, y, l):
    """Censored NLL per row and its gradient w.r.t. ``out``."""
    return _raw_call(out, y, l, 1.0, 0.0, 0.0)


def observed_nll_raw(out, y, l=None):
    if l is None:
        l = np.ones(len(y), dtype=bool)
    return _raw_call(out, y, l, 0.0, 1.0, 0.0)


def bce_raw(out, y, l):
    return _raw_call(out, y, l, 0.0, 0.0, 1.0)


def total_loss_raw(out, y, l):
    return _raw_call(out, y, l, 1.0, 1.0, 1.0)


LOSS_TERMS = {
    "censored": censored_nll_raw,
    "observed": observed_nll_raw,
    "bce": bce_raw,
    "total": total_loss_raw,
}


def censored_nll_mean(out, y, l) -> float:
    """Mean censored NLL of a batch of raw outputs (no gradient)."""
    out = np.asarray(out, dtype=np.float64)
    sig = np.maximum(softplus_array(out[:, 1]), SIGMA_FLOOR)
    r = (y - out[:, 0]) / sig
    v = np.where(l, 0.5 * r * r + np.log(sig) + HALF_LOG_2PI, -std_norm_logsf(r))
    return float(np.mean(v))
