import numpy as np
import pytest
from scipy import stats as sps

from sandlab.measures import Poisson, Seed
from sandlab.stats import clt_statistic, ks_two_sample


def test_ks_identical_samples():
    a = [1, 2, 3, 4, 5] * 40
    res = ks_two_sample(a, list(a))
    assert res.statistic == 0.0
    assert res.p_value == pytest.approx(1.0)
    assert not res.reject


def test_ks_matches_scipy_asymptotic():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 1, 400)
    b = rng.normal(0.1, 1, 300)
    ours = ks_two_sample(a, b)
    ref = sps.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
    n_eff = a.size * b.size / (a.size + b.size)
    assert ours.p_value == pytest.approx(
        float(sps.kstwobign.sf(np.sqrt(n_eff) * ours.statistic)), rel=1e-9
    )


def test_ks_rejects_clearly_different():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 1, 500)
    b = rng.normal(1.0, 1, 500)
    res = ks_two_sample(a, b, level=0.01)
    assert res.reject


def test_ks_handles_ties():
    # heavily tied integer data must still agree with scipy
    rng = np.random.default_rng(2)
    a = rng.integers(0, 5, 300)
    b = rng.integers(0, 5, 300)
    ours = ks_two_sample(a, b)
    ref = sps.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)


def test_ks_result_records_sizes_and_level():
    res = ks_two_sample([1, 2], [3, 4, 5], level=0.05)
    assert res.n_a == 2 and res.n_b == 3
    assert res.level == 0.05


def test_clt_statistic_centering():
    # constant-1 heights: every summand vanishes
    from sandlab.measures import Constant

    assert clt_statistic(Constant(1), 100, Seed(0)) == 0.0


def test_clt_statistic_scale():
    # S_n = n^{-1/2} * sum over [-n, n] of (eta - 1): for Poisson(1)
    # the variance is (2n + 1)/n ~ 2
    vals = [clt_statistic(Poisson(1.0), 2000, Seed(0, r)) for r in range(400)]
    v = np.var(vals, ddof=1)
    assert 1.7 < v < 2.3
    assert abs(np.mean(vals)) < 0.2


def test_clt_statistic_deterministic_in_seed():
    a = clt_statistic(Poisson(1.0), 500, Seed(9))
    b = clt_statistic(Poisson(1.0), 500, Seed(9))
    assert a == b
