import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssepglauber.errors import BlockTooLargeError, InvalidParametersError
from ssepglauber.model import (
    BlockKernel,
    LatticeConfig,
    LocalFunction,
    ModelParams,
    beta_dn,
    block_average_fields,
    block_averages,
    bond_table,
    drift_decomposition,
    flip_rate,
    flip_rates,
    neighbor_table,
    reaction,
    solve_rho_star,
)

rates = st.tuples(
    st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(-0.99, 3.0)
).filter(lambda t: t[2] > -t[0])


def test_rho_star_closed_forms():
    assert solve_rho_star(1, 1, 0) == pytest.approx(0.5, abs=1e-12)
    assert solve_rho_star(2, 1, 0) == pytest.approx(2 / 3, abs=1e-12)


def test_rho_star_with_interaction_matches_quadratic_root():
    a, b, lam = 1.0, 1.0, 0.1
    # lam rho^2 + (a + b - lam) rho - a = 0
    root = (-(a + b - lam) + math.sqrt((a + b - lam) ** 2 + 4 * lam * a)) / (2 * lam)
    assert solve_rho_star(a, b, lam) == pytest.approx(root, abs=1e-12)
    assert solve_rho_star(a, b, lam) == pytest.approx(0.512483, abs=1e-4)


@given(rates)
def test_rho_star_is_a_root_in_unit_interval(abl):
    a, b, lam = abl
    rho = solve_rho_star(a, b, lam)
    assert 0 < rho < 1
    assert abs(reaction(rho, a, b, lam)) < 1e-10


@pytest.mark.parametrize("a,b,lam", [(0, 1, 0), (1, 0, 0), (1, 1, -1.0), (-1, 1, 0)])
def test_invalid_rates(a, b, lam):
    with pytest.raises(InvalidParametersError):
        ModelParams(8, 1, a, b, lam)


def test_params_derived_quantities():
    p = ModelParams(16, 1, 1.0, 1.0, 0.0)
    assert p.chi_star == pytest.approx(0.25)
    assert p.Fprime_star == pytest.approx(-2.0)
    assert p.G_star == pytest.approx(1.0)
    assert p.beta_dn == pytest.approx(4.0)
    assert p.as_dict()["lambda"] == 0.0


def test_beta_scalings():
    assert beta_dn(256, 1) == pytest.approx(16.0)
    assert beta_dn(64, 2) == pytest.approx(64 / math.sqrt(math.log(64)))
    assert beta_dn(10, 3) == pytest.approx(10.0)


def test_flip_rate_examples():
    p = ModelParams(8, 1, 1.0, 1.0, 0.1)
    eta = np.zeros(8, dtype=np.uint8)
    eta[3] = 1
    assert flip_rate(eta, 3, p) == pytest.approx(1.0)
    eta2 = np.zeros(8, dtype=np.uint8)
    eta2[[2, 4]] = 1
    assert flip_rate(eta2, 3, p) == pytest.approx(1.1)
    eta3 = np.zeros(8, dtype=np.uint8)
    eta3[2] = 1
    assert flip_rate(eta3, 3, p) == pytest.approx(1.05)


def test_flip_rates_vector_matches_scalar():
    rng = np.random.default_rng(3)
    p = ModelParams(5, 2, 0.7, 1.3, 0.4)
    eta = rng.integers(0, 2, p.n_sites)
    vec = flip_rates(eta, p)
    assert np.allclose(vec, [flip_rate(eta, x, p) for x in range(p.n_sites)])


def test_geometry_tables():
    nbr = neighbor_table(4, 2)
    assert nbr.shape == (16, 4)
    # every neighbour relation is symmetric
    for x in range(16):
        for y in nbr[x]:
            assert x in nbr[y]
    bonds = bond_table(4, 2)
    assert len(bonds) == 32
    assert len({tuple(sorted(b)) for b in bonds}) == 32


@settings(max_examples=50)
@given(st.integers(3, 30), st.integers(1, 3), rates, st.integers(0, 2 ** 32 - 1))
def test_drift_decomposition_identity(n, d, abl, seed):
    if n ** d > 4000:
        n = 6
    p = ModelParams(n, d, *abl)
    eta = np.random.default_rng(seed).integers(0, 2, p.n_sites)
    direct, expanded = drift_decomposition(eta, p)
    assert np.max(np.abs(direct - expanded)) <= 1e-12


def test_lattice_config_bit_packing():
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 2, 37).astype(np.uint8)
    c = LatticeConfig(37, 1, arr)
    assert np.array_equal(c.to_array(), arr)
    assert c.particle_count == arr.sum()
    c2 = c.copy()
    c2.flip(5)
    assert c2[5] == 1 - arr[5]
    c2.swap(0, 1)
    assert c2[0] == arr[1] and c2[1] == arr[0]
    assert c != c2


def test_block_averages_trivial_cases():
    n, d = 12, 1
    rng = np.random.default_rng(1)
    eta = rng.integers(0, 2, n)
    g = rng.random(n)
    x = 5
    left, right, q = block_averages(eta, x, 1, 0.5, n, d, g)
    bar = eta[x] - 0.5
    assert left == pytest.approx(bar * g[x])
    assert right == pytest.approx(bar)
    assert q == pytest.approx(bar)
    ones = np.ones(n)
    assert block_averages(ones, 3, 3, 0.5, n, d) == pytest.approx((0.5, 0.5, 0.5))


@pytest.mark.parametrize("d,n", [(1, 20), (2, 9)])
def test_block_averages_fft_matches_direct(d, n):
    rng = np.random.default_rng(2)
    eta = rng.integers(0, 2, n ** d)
    g = rng.random(n ** d)
    ell = 3
    left, right, smooth = block_average_fields(eta, ell, 0.4, n, d, g)
    for x in range(n ** d):
        direct = block_averages(eta, x, ell, 0.4, n, d, g)
        assert np.allclose(direct, (left.ravel()[x], right.ravel()[x], smooth.ravel()[x]), atol=1e-12)


def test_block_kernel_shapes_and_mass():
    k = BlockKernel(4, 2)
    assert k.p.shape == (4, 4) and k.q.shape == (7, 7)
    assert k.p.sum() == pytest.approx(1.0) and k.q.sum() == pytest.approx(1.0)
    with pytest.raises(BlockTooLargeError):
        k.on_torus(8)
    with pytest.raises(BlockTooLargeError):
        block_averages(np.zeros(6), 0, 3, 0.5, 6, 1)


def test_local_function_tabulation():
    rho = 0.3
    f = LocalFunction.from_callable(lambda e0, e1: e0 * e1 - rho ** 2, 2)
    assert f(1, 1) == pytest.approx(1 - rho ** 2)
    assert f(1, 0) == pytest.approx(-rho ** 2)
    assert LocalFunction.centered_occupation(rho)(1) == pytest.approx(1 - rho)
    with pytest.raises(InvalidParametersError):
        LocalFunction(np.zeros(16))
    assert list(f.window_sites(5, 2)) == [0, 1]
