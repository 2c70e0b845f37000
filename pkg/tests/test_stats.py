import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssepglauber.errors import InsufficientSamplesError, InvalidParametersError
from ssepglauber.stats import estimate


def test_constant_samples():
    r = estimate(np.full(50, 3.0), "variance")
    assert r.estimate == 0.0 and r.se == 0.0


def test_kurtosis_of_normal_draws():
    x = np.random.default_rng(0).standard_normal(100_000)
    r = estimate(x, "kurtosis")
    assert abs(r.estimate - 3.0) <= 4 * r.se
    s = estimate(x, "skewness")
    assert abs(s.estimate) <= 4 * s.se


def test_identical_vectors_correlate_perfectly():
    x = np.random.default_rng(1).standard_normal(40)
    assert estimate(x, "correlation", x).estimate == pytest.approx(1.0)


def test_jackknife_variance_se_against_normal_theory():
    x = np.random.default_rng(2).standard_normal(20_000)
    r = estimate(x, "variance")
    assert r.estimate == pytest.approx(1.0, abs=0.05)
    # for Gaussian data Var(s^2) = 2 sigma^4 / (n - 1)
    assert r.se == pytest.approx(np.sqrt(2 / 19_999), rel=0.1)


def test_jackknife_matches_explicit_leave_one_out():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(35), rng.standard_normal(35)
    loo = np.array([np.cov(np.delete(x, i), np.delete(y, i))[0, 1] for i in range(35)])
    se = np.sqrt(34 / 35 * np.sum((loo - loo.mean()) ** 2))
    assert estimate(x, "covariance", y).se == pytest.approx(se, rel=1e-10)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError):
        estimate(np.arange(10.0), "variance")
    with pytest.raises(InvalidParametersError):
        estimate(np.arange(40.0), "covariance")
    with pytest.raises(InvalidParametersError):
        estimate(np.arange(40.0), "median")


@given(st.lists(st.floats(-1e3, 1e3), min_size=30, max_size=80),
       st.sampled_from(["mean", "variance", "skewness", "kurtosis"]))
def test_record_invariants(xs, stat):
    r = estimate(xs, stat)
    if np.isfinite(r.estimate):
        assert r.se >= 0
        assert r.ci_low <= r.estimate <= r.ci_high
        assert r.level == 0.99
        assert r.n == len(xs)
