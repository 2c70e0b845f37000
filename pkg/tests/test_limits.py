import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ssepglauber.errors import InvalidParametersError, TruncationInsufficientError
from ssepglauber.greens import rw_limit_quantities
from ssepglauber.limits import (
    CovarianceModel,
    OUModeModel,
    bm_variance_2d,
    bump_transform,
    is_degree_one,
    mollifier_coefficients,
    ou_mode_covariance,
    phi_f,
    write_alpha_csv,
)
from ssepglauber.model import LocalFunction, ModelParams

PRESET = ModelParams(256, 1, 1.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def model():
    return CovarianceModel(PRESET)


def lattice_covariance(n, t, s, chi=0.25, decay=2.0):
    """Cov of sqrt(n) int eta_0 at lambda = 0 computed on the finite ring.

    Cov(etabar_0(u), etabar_0(v)) = chi e^{-decay w} p_n(w, 0), w = |u - v|,
    with p_n the return probability of the accelerated walk.
    """
    k = np.arange(n)
    rates = n * n * (2 - 2 * np.cos(2 * np.pi * k / n)) + decay
    t, s = min(t, s), max(t, s)

    def weight(w):
        return max(0.0, min(t, s - w)) + max(0.0, t - w)

    def integrand(x):
        w = math.exp(x)
        return w * weight(w) * chi * np.mean(np.exp(-rates * w))

    val, _ = integrate.quad(integrand, -30, math.log(s), limit=400, epsabs=1e-13)
    return n * val


def test_mode_covariance_at_origin():
    for k in (0, 1, 5, 100):
        assert ou_mode_covariance(k, 0.0, 0.0, PRESET) == pytest.approx(PRESET.chi_star)


def test_mode_covariance_stationary_limit():
    p = ModelParams(64, 1, 2.0, 1.0, 0.3)
    m = OUModeModel(3, p)
    assert ou_mode_covariance(3, 50.0, 50.0, p) == pytest.approx(m.stationary_variance, rel=1e-12)


def test_mode_zero_variance_is_constant_for_preset():
    m = OUModeModel(0, PRESET)
    assert m.drift == -2.0 and m.noise_variance == 1.0
    assert ou_mode_covariance(0, 1.0, 1.0, PRESET) == pytest.approx(0.25, abs=1e-15)
    samples = m.sample([0.5, 1.0], 1_000_000, rng=11)
    se = 0.25 * math.sqrt(2 / 1_000_000)
    assert abs(samples[:, 1].var() - 0.25) < 5 * se


def test_stationary_variance_tends_to_chi():
    p = ModelParams(64, 1, 1.5, 0.7, 0.2)
    assert OUModeModel(10_000, p).stationary_variance == pytest.approx(p.chi_star, rel=1e-6)


def test_alpha_vanishes_at_zero(model):
    assert model.alpha(0.0, 0.7) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_alpha_symmetric(t, s):
    m = CovarianceModel(PRESET, K=2000)
    assert abs(m.alpha(t, s) - m.alpha(s, t)) <= 1e-14


@pytest.mark.parametrize("t,s", [(0.25, 0.25), (1.0, 1.0), (0.25, 1.0), (0.5, 1.0)])
def test_alpha_matches_finite_ring(model, t, s):
    assert model.alpha(t, s) == pytest.approx(lattice_covariance(256, t, s), rel=1e-3)


def test_alpha_truncation_consistency():
    a = CovarianceModel(PRESET, K=10_000)
    b = CovarianceModel(PRESET, K=20_000)
    assert abs(a.alpha(1, 1) - b.alpha(1, 1)) <= a.tail_bound(1, 1)


def test_alpha_bound_enforced():
    m = CovarianceModel(PRESET, K=100)
    with pytest.raises(TruncationInsufficientError):
        m.alpha_with_bound(1.0, 1.0, tol=1e-6)
    value, bound = CovarianceModel(PRESET).alpha_with_bound(1.0, 1.0)
    assert bound <= 1e-6 and value > 0


def test_alpha_matrix_psd(model):
    S = model.alpha_matrix([0.1, 0.3, 0.6, 1.0])
    assert np.min(np.linalg.eigvalsh(S)) > 0


def test_mollified_alpha_increases_to_point_value(model):
    vals = [CovarianceModel(PRESET, epsilon=e).alpha(1, 1) for e in (0.2, 0.1, 0.05)]
    assert vals[0] < vals[1] < vals[2] < model.alpha(1, 1)


def test_bump_transform_properties():
    assert bump_transform(0.0)[0] == pytest.approx(1.0, abs=1e-14)
    w = np.linspace(0, 60, 200)
    vals = bump_transform(w)
    assert np.all(np.abs(vals) <= 1 + 1e-14)
    c = mollifier_coefficients(0.05, 50)
    assert np.all(c ** 2 <= mollifier_coefficients(None, 50) ** 2 + 1e-15)


def test_bm_variance_values():
    p = ModelParams(32, 2, 1.0, 1.0, 0.0)
    assert bm_variance_2d(1.0, p)[0] == pytest.approx(1 / (4 * math.pi))
    assert bm_variance_2d(0.0, p) == (0.0, 0.0)
    with pytest.raises(InvalidParametersError):
        bm_variance_2d(1.0, PRESET)


def test_bm_variance_consistent_with_green_limit():
    p = ModelParams(512, 2, 1.0, 1.0, 0.0)
    gl = rw_limit_quantities(512, 2).grad_energy_scaled
    target, from_green = bm_variance_2d(1.0, p, green_limit=gl)
    assert from_green == pytest.approx(target, rel=0.10)


def test_phi_f_examples():
    rho_star = 0.4
    occ = LocalFunction.centered_occupation(rho_star)
    assert phi_f(occ, 0.7) == pytest.approx((0.3, 1.0))
    pair = LocalFunction.from_callable(lambda a, b: a * b - rho_star ** 2, 2)
    assert phi_f(pair, 0.7) == pytest.approx((0.49 - 0.16, 1.4))
    assert is_degree_one(pair, rho_star)
    bad = LocalFunction.from_callable(lambda a, b: a * (1 - b), 2)
    value, _ = phi_f(bad, rho_star)
    assert value == pytest.approx(rho_star * (1 - rho_star))
    assert not is_degree_one(bad, rho_star)


def test_alpha_csv(tmp_path):
    m = CovarianceModel(PRESET, K=500)
    path = tmp_path / "alpha.csv"
    write_alpha_csv(path, m, [0.5, 1.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,s,alpha" and len(lines) == 5
