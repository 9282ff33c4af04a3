import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from cenal.data import CensoredSample
from cenal.heads import HeadOutput
from cenal.losses import (
    LOSS_TERMS,
    LossError,
    bce_raw,
    bce_term,
    censored_nll_mean,
    censored_nll_raw,
    censored_nll_term,
    observed_nll_raw,
    observed_nll_term,
    total_loss,
    total_loss_raw,
)
from cenal.neural import heads_from_raw

X0 = np.zeros(1)


def test_censored_term_uses_survival_mass():
    """
    A censored row at threshold 0.5 under N(0, 1):
    -log(1 - Phi(0.5)) = -log(0.30853753872598690) = 1.1759117615936186
    """
    h = HeadOutput(0.0, 1.0, 0.0, 1.0, 0.5)
    assert_allclose(censored_nll_term(h, CensoredSample(X0, 0.5, False)), 1.1759117615936186, rtol=1e-13)
    assert_allclose(censored_nll_term(h, CensoredSample(X0, 0.5, True)), -stats.norm.logpdf(0.5), rtol=1e-14)


def test_observed_term_is_gaussian_nll_for_every_row():
    h = HeadOutput(9.0, 9.0, 0.3, 0.7, 0.5)
    for l in (True, False):
        assert_allclose(observed_nll_term(h, CensoredSample(X0, 1.1, l)),
                        -stats.norm.logpdf(1.1, 0.3, 0.7), rtol=1e-14)


def test_bce_term():
    """-log(1 - 0.9) = 2.302585... for a censored row, -log 0.9 for an uncensored one."""
    h = HeadOutput(0.0, 1.0, 0.0, 1.0, 0.9)
    assert_allclose(bce_term(h, CensoredSample(X0, 0.0, False)), 2.302585092994045, rtol=1e-13)
    assert_allclose(bce_term(h, CensoredSample(X0, 0.0, True)), -math.log(0.9), rtol=1e-14)


def test_bce_term_logit_form_matches_probability_form():
    a = 1.7
    p = 1 / (1 + math.exp(-a))
    for l in (True, False):
        s = CensoredSample(X0, 0.0, l)
        assert_allclose(bce_term(HeadOutput(0, 1, 0, 1, p, lam_logit=a), s),
                        bce_term(HeadOutput(0, 1, 0, 1, p), s), rtol=1e-12)


def test_total_loss_breakdown():
    h = HeadOutput(0.0, 1.0, 0.2, 0.8, 0.7)
    batch = [(h, CensoredSample(X0, 0.4, True)), (h, CensoredSample(X0, 1.3, False))]
    tl = total_loss(batch)
    c = np.mean([censored_nll_term(h, s) for _, s in batch])
    o = np.mean([observed_nll_term(h, s) for _, s in batch])
    b = np.mean([bce_term(h, s) for _, s in batch])
    assert_allclose([tl.censored_nll, tl.observed_nll, tl.bce], [c, o, b], rtol=1e-15)
    assert tl.total == tl.censored_nll + tl.observed_nll + tl.bce


def test_total_loss_rejects_empty_and_non_finite():
    with pytest.raises(ValueError):
        total_loss([])
    h = HeadOutput(0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(LossError) as e:
        total_loss([(h, CensoredSample(X0, 0.0, True)), (h, CensoredSample(X0, 0.0, False))])
    assert e.value.sample_index == 1


def _random_batch(rng, n=40):
    out = rng.normal(size=(n, 5)) * np.array([2.0, 1.5, 2.0, 1.5, 3.0])
    y = rng.normal(size=n) * 2
    l = rng.random(n) < 0.5
    return out, y, l


def test_raw_kernels_match_scalar_terms():
    rng = np.random.default_rng(0)
    out, y, l = _random_batch(rng)
    heads = heads_from_raw(out)
    for i in range(len(y)):
        h = HeadOutput(*(float(getattr(heads, f)[i]) for f in
                         ("mu_star", "sigma_star", "mu_obs", "sigma_obs", "lam", "lam_logit")))
        s = CensoredSample(X0, y[i], l[i])
        assert_allclose(censored_nll_raw(out, y, l)[0][i], censored_nll_term(h, s), rtol=1e-12)
        assert_allclose(observed_nll_raw(out, y, l)[0][i], observed_nll_term(h, s), rtol=1e-12)
        assert_allclose(bce_raw(out, y, l)[0][i], bce_term(h, s), rtol=1e-12)
    v = total_loss_raw(out, y, l)[0]
    assert_allclose(v, sum(LOSS_TERMS[k](out, y, l)[0] for k in ("censored", "observed", "bce")), rtol=1e-14)
    assert_allclose(censored_nll_mean(out, y, l), censored_nll_raw(out, y, l)[0].mean(), rtol=1e-13)


@pytest.mark.parametrize("name", sorted(LOSS_TERMS))
def test_raw_gradient_central_differences(name):
    rng = np.random.default_rng(1)
    out, y, l = _random_batch(rng, 25)
    fn = LOSS_TERMS[name]
    _, g = fn(out, y, l)
    h = 1e-6
    num = np.zeros_like(out)
    for idx in np.ndindex(*out.shape):
        up, dn = out.copy(), out.copy()
        up[idx] += h
        dn[idx] -= h
        num[idx] = (fn(up, y, l)[0][idx[0]] - fn(dn, y, l)[0][idx[0]]) / (2 * h)
    assert_allclose(g, num, rtol=1e-6, atol=1e-8)


def test_censored_gradient_deep_tail():
    """Deep in the survival tail the hazard is ~r, so d/dmu(-log S) -> -r/sigma."""
    out = np.array([[0.0, math.log(math.e - 1), 0, 0, 0]])  # sigma = 1
    v, g = censored_nll_raw(out, np.array([30.0]), np.array([False]))
    assert np.all(np.isfinite(v)) and np.all(np.isfinite(g))
    assert_allclose(v[0], -stats.norm.logsf(30.0), rtol=1e-12)
    assert_allclose(g[0, 0], -30.0329, rtol=1e-4)
