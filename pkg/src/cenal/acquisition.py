"""Acquisition functions: Random, Entropy, BALD and C-BALD.

The MC estimators share one set of standard-normal draws ``eps`` of shape
``(T, S)`` per input.  Draw ``t`` turns its row into samples from its own
sampling head, and the same samples feed both the marginal (mixture) and the
per-draw conditional entropies.  With common random numbers the two terms
cancel exactly when all draws agree, and the difference has far less
variance than two independent estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .heads import HeadOutput, PosteriorPredictive
from .neural import draw_masks, posterior_heads
from .prob import HALF_LOG_2PI, binary_entropy_array, logsf_scalar

FUNCTION_TAGS = ("random", "entropy", "bald", "cbald")
DEFAULT_T = 25
DEFAULT_S = 64

_SQRT1_2 = 1.0 / math.sqrt(2.0)
# below this the linear-space survival sum is redone in log space
_TINY = 1e-280


@dataclass(frozen=True)
class AcquisitionScore:
    pool_index: int
    score: float
    function_tag: str

    def __post_init__(self):
        if self.function_tag not in FUNCTION_TAGS:
            raise ValueError(f"unknown acquisition function {self.function_tag!r}")


# ---------------------------------------------------------------------------
# kernels (one input, T draws, S samples per draw)
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _log_survival_pair(r):
    s = 0.5 * math.erfc(r * _SQRT1_2)
    if s > _TINY:
        return math.log(s)
    return logsf_scalar(r)


@numba.njit(cache=True, error_model="numpy")
def _censored_entropies(mu_s, sig_s, mu_o, sig_o, lam, eps):
    """Marginal and mean conditional censored entropy for one input.

    Samples for draw t are ``mu_o[t] + sig_o[t] * eps[t]``.  Returns
    ``(H_marginal, H_conditional_mean)``.
    """
    T, S = eps.shape
    log_sig = np.empty(T)
    inv_sig = np.empty(T)
    lam_bar = 0.0
    for u in range(T):
        log_sig[u] = math.log(sig_s[u])
        inv_sig[u] = 1.0 / sig_s[u]
        lam_bar += lam[u]
    lam_bar /= T
    log_T = math.log(T)
    a = np.empty(T)
    rr = np.empty(T)

    marg = 0.0
    cond = 0.0
    for t in range(T):
        cond_t = 0.0
        for s in range(S):
            y = mu_o[t] + sig_o[t] * eps[t, s]
            a_max = -np.inf
            surv = 0.0
            for u in range(T):
                r = (y - mu_s[u]) * inv_sig[u]
                rr[u] = r
                a[u] = -0.5 * r * r - log_sig[u]
                if a[u] > a_max:
                    a_max = a[u]
                surv += 0.5 * math.erfc(r * _SQRT1_2)
            dens = 0.0
            for u in range(T):
                dens += math.exp(a[u] - a_max)
            log_phi_bar = a_max + math.log(dens) - log_T - HALF_LOG_2PI
            if surv > _TINY:
                log_s_bar = math.log(surv) - log_T
            else:
                m = -np.inf
                for u in range(T):
                    a[u] = logsf_scalar(rr[u])
                    if a[u] > m:
                        m = a[u]
                acc = 0.0
                for u in range(T):
                    acc += math.exp(a[u] - m)
                log_s_bar = m + math.log(acc) - log_T
            marg += lam_bar * log_phi_bar + (1.0 - lam_bar) * log_s_bar
            # the own-draw term, written so T = 1 reproduces the mixture bitwise
            log_phi_t = rr[t] * rr[t] * -0.5 - log_sig[t] - HALF_LOG_2PI
            cond_t += lam[t] * log_phi_t + (1.0 - lam[t]) * _log_survival_pair(rr[t])
        cond += cond_t
    return -marg / (T * S), -cond / (T * S)


@numba.njit(cache=True, error_model="numpy")
def _gaussian_mixture_entropies(mu, sig, eps):
    """MC entropy of the equal-weight mixture and mean per-draw entropy.

    Samples for draw t are ``mu[t] + sig[t] * eps[t]`` (stratified over the
    components); the per-draw term uses the same samples.
    """
    T, S = eps.shape
    log_sig = np.empty(T)
    inv_sig = np.empty(T)
    for u in range(T):
        log_sig[u] = math.log(sig[u])
        inv_sig[u] = 1.0 / sig[u]
    log_T = math.log(T)
    a = np.empty(T)
    marg = 0.0
    cond = 0.0
    for t in range(T):
        for s in range(S):
            y = mu[t] + sig[t] * eps[t, s]
            a_max = -np.inf
            for u in range(T):
                r = (y - mu[u]) * inv_sig[u]
                a[u] = -0.5 * r * r - log_sig[u]
                if a[u] > a_max:
                    a_max = a[u]
            dens = 0.0
            for u in range(T):
                dens += math.exp(a[u] - a_max)
            marg += a_max + math.log(dens) - log_T - HALF_LOG_2PI
            cond += a[t] - HALF_LOG_2PI
    return -marg / (T * S), -cond / (T * S)


@numba.njit(cache=True)
def _batch_cbald_terms(mu_s, sig_s, mu_o, sig_o, lam, eps):
    n = mu_s.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        out[i, 0], out[i, 1] = _censored_entropies(mu_s[i], sig_s[i], mu_o[i], sig_o[i], lam[i], eps[i])
    return out


@numba.njit(cache=True)
def _batch_bald_terms(mu, sig, eps):
    n = mu.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        out[i, 0], out[i, 1] = _gaussian_mixture_entropies(mu[i], sig[i], eps[i])
    return out


# ---------------------------------------------------------------------------
# single-input API
# ---------------------------------------------------------------------------


def _check_S(S: int) -> int:
    if S < 1:
        raise ValueError(f"S must be at least 1, got {S}")
    return int(S)


def _single(pp: PosteriorPredictive) -> PosteriorPredictive:
    if pp.batch_shape:
        raise ValueError("expected the posterior predictive of a single input")
    return pp


def _as_pp(h) -> PosteriorPredictive:
    if isinstance(h, PosteriorPredictive):
        return _single(h)
    if isinstance(h, HeadOutput):
        return PosteriorPredictive.from_draws([h])
    raise TypeError(f"expected HeadOutput or PosteriorPredictive, got {type(h).__name__}")


def _cbald_terms(pp: PosteriorPredictive, eps) -> tuple[float, float]:
    return _censored_entropies(pp.mu_star, pp.sigma_star, pp.mu_obs, pp.sigma_obs, pp.lam, eps)


def censored_entropy_conditional(h: HeadOutput, S: int, rng: np.random.Generator) -> float:
    """MC estimate of one draw's censored entropy, sampling y from its observed head."""
    pp = _as_pp(h)
    if pp.T != 1:
        raise ValueError("censored_entropy_conditional takes a single draw")
    eps = rng.standard_normal((1, _check_S(S)))
    return _cbald_terms(pp, eps)[1]


def censored_entropy_marginal(pp: PosteriorPredictive, S: int, rng: np.random.Generator) -> float:
    """MC estimate of the censored entropy of the draw-averaged predictive."""
    pp = _single(pp)
    eps = rng.standard_normal((pp.T, _check_S(S)))
    return _cbald_terms(pp, eps)[0]


def mi_label(pp: PosteriorPredictive, S: int, rng: np.random.Generator) -> float:
    pp = _single(pp)
    eps = rng.standard_normal((pp.T, _check_S(S)))
    marg, cond = _cbald_terms(pp, eps)
    return marg - cond


def mi_censor(pp: PosteriorPredictive) -> float:
    lam = np.asarray(pp.lam, dtype=np.float64)
    h = binary_entropy_array(lam.mean(axis=-1)) - binary_entropy_array(lam).mean(axis=-1)
    # the mean of equal floats need not equal them bitwise, so agreement is
    # special-cased; otherwise Jensen makes h >= 0 up to rounding
    h = np.where(lam.max(axis=-1) == lam.min(axis=-1), 0.0, np.maximum(h, 0.0))
    return float(h) if h.ndim == 0 else h


def cbald_score(pp: PosteriorPredictive, S: int, rng: np.random.Generator) -> float:
    return mi_label(pp, S, rng) + mi_censor(pp)


def bald_score(pp: PosteriorPredictive, S: int, rng: np.random.Generator) -> float:
    """Uncensored BALD on the latent head.

    The per-draw entropy is estimated on the same samples as the mixture
    entropy rather than in closed form, so agreeing draws score exactly 0.
    """
    pp = _single(pp)
    eps = rng.standard_normal((pp.T, _check_S(S)))
    marg, cond = _gaussian_mixture_entropies(pp.mu_star, pp.sigma_star, eps)
    return marg - cond


def entropy_baseline_score(pp: PosteriorPredictive) -> float:
    """Total predictive variance of the latent head (population variance over draws)."""
    v = np.var(pp.mu_star, axis=-1) + np.mean(pp.sigma_star ** 2, axis=-1)
    return float(v) if np.ndim(v) == 0 else v


# ---------------------------------------------------------------------------
# pool scoring
# ---------------------------------------------------------------------------


def mask_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 0])


def point_rng(seed: int, pool_index: int) -> np.random.Generator:
    """Sample stream for one pool point; independent of pool order and chunking."""
    return np.random.default_rng([seed, 1, pool_index])


def _point_eps(seed: int, indices, T: int, S: int) -> np.ndarray:
    eps = np.empty((len(indices), T, S))
    for j, i in enumerate(indices):
        eps[j] = point_rng(seed, int(i)).standard_normal((T, S))
    return eps


def score_posterior(pp: PosteriorPredictive, fn: str, S: int, seed: int,
                    indices: Sequence[int] | None = None, chunk: int = 256) -> np.ndarray:
    """Scores for a batch posterior (fields ``(N, T)``); ``indices`` name the pool points."""
    if fn not in FUNCTION_TAGS:
        raise ValueError(f"unknown acquisition function {fn!r}")
    n = len(pp)
    indices = np.arange(n) if indices is None else np.asarray(indices)
    if fn == "random":
        return np.random.default_rng([seed, 2]).random(n)
    if fn == "entropy":
        return np.asarray(entropy_baseline_score(pp), dtype=np.float64).reshape(n)
    S = _check_S(S)
    out = np.empty(n)
    for lo in range(0, n, chunk):
        sl = slice(lo, lo + chunk)
        eps = _point_eps(seed, indices[sl], pp.T, S)
        if fn == "bald":
            terms = _batch_bald_terms(pp.mu_star[sl], pp.sigma_star[sl], eps)
            out[sl] = terms[:, 0] - terms[:, 1]
        else:
            terms = _batch_cbald_terms(pp.mu_star[sl], pp.sigma_star[sl], pp.mu_obs[sl],
                                       pp.sigma_obs[sl], pp.lam[sl], eps)
            out[sl] = (terms[:, 0] - terms[:, 1]) + mi_censor(pp[sl])
    return out


def score_pool(pool, w, fn: str, T: int = DEFAULT_T, S: int = DEFAULT_S, seed: int = 0,
               indices: Sequence[int] | None = None) -> list[AcquisitionScore]:
    """Score every pool point under T consistent dropout masks drawn from ``seed``.

    ``indices`` (default ``0..N-1``) are the pool indices reported back and
    used to derive the per-point sample streams.
    """
    X = np.asarray(pool, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("cannot score an empty pool")
    indices = np.arange(len(X)) if indices is None else np.asarray(indices)
    if fn == "random":
        scores = score_posterior(_dummy_pp(len(X)), fn, S, seed, indices)
    else:
        pp = posterior_heads(w, X, draw_masks(w.cfg, T, mask_seed(seed)))
        scores = score_posterior(pp, fn, S, seed, indices)
    return [AcquisitionScore(int(i), float(s), fn) for i, s in zip(indices, scores)]


def _dummy_pp(n: int) -> PosteriorPredictive:
    z, o = np.zeros((n, 1)), np.ones((n, 1))
    return PosteriorPredictive(z, o, z, o, o)


def select_top_k(scores: Sequence[AcquisitionScore] | np.ndarray, k: int) -> list[int]:
    """Pool indices of the k largest scores, ties to the lowest index."""
    if isinstance(scores, np.ndarray):
        idx = np.arange(len(scores))
        vals = scores
    else:
        idx = np.array([s.pool_index for s in scores], dtype=np.int64)
        vals = np.array([s.score for s in scores], dtype=np.float64)
    if k < 0 or k > len(vals):
        raise ValueError(f"cannot select {k} points from a pool of {len(vals)}")
    order = np.lexsort((idx, -vals))
    return [int(i) for i in idx[order[:k]]]
