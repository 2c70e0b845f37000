import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssepglauber.errors import InconsistentInputError, NonconformingGridError
from ssepglauber.limits import CovarianceModel
from ssepglauber.mdp import (
    GalerkinPath,
    RateProblem,
    contraction_check,
    rate_I,
    rate_I_degree_one,
    rate_Q0,
    rate_Qdyn,
)
from ssepglauber.model import ModelParams

PRESET = ModelParams(256, 1, 1.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def kernel():
    return CovarianceModel(PRESET, K=4000)


def test_rate_zero_target():
    assert rate_I(RateProblem([0.5, 1.0], [0.0, 0.0], params=PRESET)) == 0.0


def test_rate_single_time(kernel):
    a = kernel.alpha(1, 1)
    assert rate_I(RateProblem([1.0], [0.7], sigma=[[a]])) == pytest.approx(0.49 / (2 * a))


def test_rate_two_times_matches_eigendecomposition(kernel):
    t = [0.5, 1.0]
    S = kernel.alpha_matrix(t)
    g = np.array([0.3, -0.4])
    w, V = np.linalg.eigh(S)
    oracle = 0.5 * np.sum((V.T @ g) ** 2 / w)
    assert rate_I(RateProblem(t, g, sigma=S)) == pytest.approx(oracle, rel=1e-12)


def test_rate_singular_kernel():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert rate_I(RateProblem([0.5, 1.0], [1.0, 1.0], sigma=S)) == pytest.approx(0.5)
    assert rate_I(RateProblem([0.5, 1.0], [1.0, -1.0], sigma=S)) == math.inf


def test_rate_problem_validation():
    with pytest.raises(InconsistentInputError):
        RateProblem([1.0, 0.5], [1.0, 1.0], sigma=np.eye(2))
    with pytest.raises(InconsistentInputError):
        RateProblem([0.5], [1.0, 1.0], sigma=np.eye(1))
    with pytest.raises(InconsistentInputError):
        RateProblem([0.5], [1.0])


def test_rate_problem_json_roundtrip(kernel):
    p = RateProblem([0.5, 1.0], [0.2, 0.1], sigma=kernel.alpha_matrix([0.5, 1.0]))
    q = RateProblem.from_json(p.to_json())
    assert rate_I(q) == rate_I(p)
    assert json.loads(p.to_json())["times"] == [0.5, 1.0]


def test_degree_one_rate_scaling(kernel):
    a = kernel.alpha(1, 1)
    p = RateProblem([1.0], [0.5], sigma=[[a]])
    res = rate_I_degree_one(p, 2 * 0.5)
    assert res["value"] == pytest.approx(rate_I(p))
    res2 = rate_I_degree_one(p, 2.0)
    assert res2["value"] == pytest.approx(rate_I(p) / 4)
    assert res2["normalization_ambiguous"]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.1, 5))
def test_rate_homogeneous_of_degree_two(g, c):
    S = CovarianceModel(PRESET, K=500).alpha_matrix([0.3, 0.6, 1.0])
    base = rate_I(RateProblem([0.3, 0.6, 1.0], g, sigma=S))
    scaled = rate_I(RateProblem([0.3, 0.6, 1.0], c * np.array(g), sigma=S))
    assert scaled == pytest.approx(c * c * base, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_marginal_monotonicity(g1, g2):
    S = CovarianceModel(PRESET, K=500).alpha_matrix([0.5, 1.0])
    both = rate_I(RateProblem([0.5, 1.0], [g1, g2], sigma=S))
    one = rate_I(RateProblem([1.0], [g2], sigma=S[1:, 1:]))
    assert both >= one - 1e-12


def test_rate_Q0_examples():
    assert rate_Q0(np.zeros(5), 0.25) == 0.0
    unit = np.zeros(5)
    unit[2] = 1.0
    assert rate_Q0(unit, 0.25) == pytest.approx(2.0)
    for K_s in (4, 16, 64):
        delta = np.concatenate([[1.0], np.full(K_s, math.sqrt(2.0))])
        assert rate_Q0(delta, 0.25) == pytest.approx((1 + 2 * K_s) / 0.5)


def test_rate_Qdyn_zero_path():
    path = GalerkinPath.uniform(np.zeros((4, 11)), 1.0)
    assert rate_Qdyn(path, PRESET) == 0.0


def test_rate_Qdyn_deterministic_flow():
    p = ModelParams(64, 1, 1.0, 1.0, 0.3)
    t = np.linspace(0, 1, 201)
    k = np.arange(6)[:, None]
    mu = -4 * np.pi ** 2 * k ** 2 + p.Fprime_star
    coeffs = np.exp(mu * t[None, :]) * (1.0 / (1 + k))
    path = GalerkinPath(t, coeffs)
    assert rate_Qdyn(path, p, interpolation="bridge") <= 1e-10
    # the piecewise-linear reading converges to zero with the grid
    coarse = GalerkinPath(t[::4], coeffs[:, ::4])
    assert rate_Qdyn(path, p) < rate_Qdyn(coarse, p)


def test_rate_Qdyn_linear_single_mode():
    T = 0.8
    t = np.linspace(0, T, 17)
    coeffs = np.zeros((2, t.size))
    coeffs[1] = t
    mu = -4 * np.pi ** 2 + PRESET.Fprime_star
    s2 = 8 * np.pi ** 2 * PRESET.chi_star + PRESET.G_star
    closed = (T - mu * T ** 2 + mu ** 2 * T ** 3 / 3) / (2 * s2)
    assert rate_Qdyn(GalerkinPath(t, coeffs), PRESET) == pytest.approx(closed, rel=1e-12)


def test_galerkin_path_validation():
    with pytest.raises(NonconformingGridError):
        GalerkinPath([0.1, 0.5], np.zeros((1, 2)))
    with pytest.raises(NonconformingGridError):
        GalerkinPath([0.0, 0.5], np.zeros((1, 3)))
    with pytest.raises(NonconformingGridError):
        GalerkinPath([0.0, 0.5, 0.4], np.zeros((1, 3)))


def test_contraction_zero_target():
    res = contraction_check(PRESET, [1.0], [0.0], 0.05, K_s=8, M=32)
    assert res.variational_value == 0.0 and res.quadratic_value == 0.0


def test_contraction_matches_quadratic_value():
    res = contraction_check(PRESET, [1.0], [1.0], 0.05, K_s=64, M=256)
    quad = 1 / (2 * CovarianceModel(PRESET, epsilon=0.05).alpha(1, 1))
    assert res.quadratic_value == pytest.approx(quad, rel=1e-12)
    assert abs(res.variational_value - quad) <= 1e-3 * quad
    assert res.to_dict()["value"] == res.variational_value


def test_contraction_gap_nonincreasing_in_modes():
    gaps = [contraction_check(PRESET, [1.0], [1.0], 0.05, K_s=K, M=64).gap for K in (4, 8, 16, 32)]
    assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_contraction_grid_conformity():
    with pytest.raises(NonconformingGridError):
        contraction_check(PRESET, [0.33], [1.0], 0.05, K_s=4, M=10, T=1.0)
