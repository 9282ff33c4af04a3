import json

from numpy.testing import assert_allclose

import oracles


def test_frozen_oracle_values_reproduce():
    frozen = json.loads(oracles.FROZEN.read_text())
    fresh = oracles.compute_all()
    assert len(fresh["battery"]) == len(frozen["battery"]) == 20
    for a, b in zip(fresh["battery"], frozen["battery"]):
        assert_allclose(a["draws"], b["draws"])
        for key in ("conditional", "marginal", "mi_label", "bald"):
            assert_allclose(a[key], b[key], rtol=1e-9, atol=1e-12)
    assert_allclose(fresh["bald_ladder"]["values"], frozen["bald_ladder"]["values"], rtol=1e-9, atol=1e-12)


def test_oracle_anchor_cases():
    """Matched heads with lam = 1 give the Gaussian entropy 0.5 log(2 pi e);
    with lam = 0 the survival term gives E[-log U] = 1 for uniform U."""
    assert_allclose(oracles.conditional_entropy((0, 1, 0, 1, 1)), 1.4189385332046727, rtol=1e-10)
    assert_allclose(oracles.conditional_entropy((0, 1, 0, 1, 0)), 1.0, rtol=1e-10)
