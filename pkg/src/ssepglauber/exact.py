"""Exact computations on the full configuration space of tiny tori.

A configuration is encoded as the integer whose bit ``x`` is eta_x, which
fixes the basis order of every vector and matrix here. Rates are those of
the unaccelerated parts; the combined generator multiplies the exclusion
part by n^2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import rel_entr
from scipy.stats import poisson

from .errors import AbsoluteContinuityError, BlockTooLargeError, StateSpaceTooLargeError
from .model import ModelParams, bond_table, neighbor_table

__all__ = [
    "GeneratorMatrix",
    "build_generator",
    "state_bits",
    "product_measure",
    "evolve_distribution",
    "evolve_grid",
    "evolve_uniformized",
    "adjoint_one",
    "adjoint_one_formula",
    "relative_entropy",
    "dirichlet_forms",
    "carre_du_champ_identity",
    "detailed_balance_error",
    "decomposition_error",
    "single_site_lsi",
    "lsi_constant",
    "MeanCurve",
    "mean_curve",
    "two_point_correlation",
    "sup_correlation",
    "sup_entropy",
    "random_densities",
    "replacement_inequality_check",
    "fitted_constant",
    "check_record",
]

MAX_SITES = 14


def state_bits(n_sites: int) -> np.ndarray:
    """``(2**N, N)`` array of occupation variables, row s holding the bits of s."""
    s = np.arange(2 ** n_sites, dtype=np.int64)
    return ((s[:, None] >> np.arange(n_sites)) & 1).astype(np.int8)


@dataclass
class GeneratorMatrix:
    """Sparse rate matrices of the exclusion and flip parts, plus the combination."""

    params: ModelParams
    exclusion_part: sparse.csr_matrix
    glauber_part: sparse.csr_matrix
    combined: sparse.csr_matrix
    bits: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.combined.shape[0]

    @property
    def n_sites(self) -> int:
        return self.bits.shape[1]

    def row_sum_error(self) -> float:
        return float(max(np.max(np.abs(np.asarray(m.sum(axis=1)).ravel()))
                         for m in (self.exclusion_part, self.glauber_part, self.combined)))

    def stationary_reference(self) -> np.ndarray:
        return product_measure(self.params.rho_star, self.n_sites)


def _with_diagonal(rows, cols, vals, dim) -> sparse.csr_matrix:
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sparse.diags(diag)).tocsr()


def build_generator(params: ModelParams) -> GeneratorMatrix:
    """Exact generator n^2 L_ex + L_r on all 2^(n^d) configurations."""
    N = params.n_sites
    if N > MAX_SITES:
        raise StateSpaceTooLargeError(f"{N} sites exceeds the limit of {MAX_SITES}")
    dim = 2 ** N
    s = np.arange(dim, dtype=np.int64)
    bits = state_bits(N)
    rows, cols = [], []
    for x, y in bond_table(params.n, params.d):
        differ = bits[:, x] != bits[:, y]
        rows.append(s[differ])
        cols.append(s[differ] ^ ((1 << int(x)) | (1 << int(y))))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    ex = _with_diagonal(rows, cols, np.ones(rows.size), dim)

    nbr = neighbor_table(params.n, params.d)
    occ_nbrs = bits[:, nbr].sum(axis=2).astype(float)
    rates = (params.a + params.lam / (2 * params.d) * occ_nbrs) * (1 - bits) + params.b * bits
    frows = np.repeat(s, N)
    fcols = (s[:, None] ^ (1 << np.arange(N))).ravel()
    gl = _with_diagonal(frows, fcols, rates.ravel(), dim)
    combined = (params.n ** 2 * ex + gl).tocsr()
    return GeneratorMatrix(params, ex, gl, combined, bits)


def product_measure(rho: float, n_sites: int) -> np.ndarray:
    """Bernoulli(rho) product weights in bit-pattern order."""
    ones = state_bits(n_sites).sum(axis=1)
    return rho ** ones * (1.0 - rho) ** (n_sites - ones)


def _normalize(mu: np.ndarray) -> np.ndarray:
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum(axis=-1, keepdims=True)


def evolve_distribution(gen: GeneratorMatrix, mu0, t: float) -> np.ndarray:
    """mu_0 exp(t L), clipped to nonnegative and renormalized."""
    mu0 = np.asarray(mu0, dtype=float)
    if t == 0:
        return mu0.copy()
    return _normalize(expm_multiply(gen.combined.T * t, mu0))


def evolve_grid(gen: GeneratorMatrix, mu0, t_max: float, num: int) -> tuple[np.ndarray, np.ndarray]:
    """``(times, distributions)`` on an equispaced grid of ``num`` points in [0, t_max]."""
    times = np.linspace(0.0, t_max, num)
    mus = expm_multiply(gen.combined.T, np.asarray(mu0, dtype=float), start=0.0, stop=t_max,
                        num=num, endpoint=True)
    return times, _normalize(mus)


def evolve_uniformized(gen: GeneratorMatrix, mu0, t: float, tol: float = 1e-14) -> np.ndarray:
    """Independent evaluation of mu_0 exp(tL) through the uniformized chain."""
    L = gen.combined
    rate = float(np.max(-L.diagonal()))
    P = (sparse.identity(L.shape[0], format="csr") + L / rate).T.tocsr()
    lam = rate * t
    kmax = int(poisson.isf(tol, lam)) + 10
    weights = poisson.pmf(np.arange(kmax + 1), lam)
    vec = np.asarray(mu0, dtype=float).copy()
    out = weights[0] * vec
    for k in range(1, kmax + 1):
        vec = P @ vec
        out += weights[k] * vec
    return out / out.sum()


def adjoint_one(gen: GeneratorMatrix, rho: float | None = None) -> np.ndarray:
    """L*1 with respect to the product measure at ``rho`` (default rho*).

    Entry eta equals sum_xi nu(xi) L(xi, eta) / nu(eta).
    """
    rho = gen.params.rho_star if rho is None else rho
    nu = product_measure(rho, gen.n_sites)
    return (gen.combined.T @ nu) / nu


def adjoint_one_formula(gen: GeneratorMatrix) -> np.ndarray:
    """(lam / (2 d rho*)) sum_x sum_{y ~ x} etabar_x etabar_y, y over all 2d neighbours."""
    p = gen.params
    bar = gen.bits - p.rho_star
    nbr = neighbor_table(p.n, p.d)
    pair = (bar[:, :, None] * bar[:, nbr]).sum(axis=(1, 2))
    return p.lam / (2 * p.d * p.rho_star) * pair


def detailed_balance_error(gen: GeneratorMatrix, rho: float) -> float:
    """max |nu(eta) Q(eta, xi) - nu(xi) Q(xi, eta)| for the exclusion part."""
    nu = product_measure(rho, gen.n_sites)
    flux = sparse.diags(nu) @ gen.exclusion_part
    return float(np.max(np.abs((flux - flux.T).toarray() if gen.dimension <= 1024 else (flux - flux.T).data)))


def decomposition_error(gen: GeneratorMatrix) -> float:
    """Largest deviation in the centred expansion of c_x (1 - 2 eta_x) over all states and sites."""
    from .model import drift_decomposition

    worst = 0.0
    for eta in gen.bits:
        direct, expanded = drift_decomposition(eta, gen.params)
        worst = max(worst, float(np.max(np.abs(direct - expanded))))
    return worst


def relative_entropy(mu, nu) -> float:
    """H(mu | nu) with 0 log 0 = 0."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any((nu <= 0) & (mu > 0)):
        raise AbsoluteContinuityError("mu charges a configuration where nu vanishes")
    return float(np.sum(rel_entr(mu, nu)))


def _edge_form(Q: sparse.csr_matrix, weight: np.ndarray, f: np.ndarray) -> np.ndarray:
    """1/2 sum_{eta != xi} weight(eta) Q(eta, xi) (f(xi) - f(eta))^2, batched over rows of ``f``."""
    coo = sparse.triu(Q, k=1, format="coo"), sparse.tril(Q, k=-1, format="coo")
    f = np.atleast_2d(f)
    total = np.zeros(f.shape[0])
    for part in coo:
        diff = f[:, part.col] - f[:, part.row]
        total += (diff ** 2) @ (weight[part.row] * part.data)
    return 0.5 * total


def dirichlet_forms(gen: GeneratorMatrix, f, rho: float | None = None):
    """``(int Gamma_ex(f) dnu, int Gamma_r(f) dnu)`` under the product measure at rho*.

    The exclusion form uses unit bond rates, i.e. it is the form of L_ex
    without the n^2 speed-up carried by ``gen.combined``.
    """
    rho = gen.params.rho_star if rho is None else rho
    nu = product_measure(rho, gen.n_sites)
    f = np.asarray(f, dtype=float)
    ex = _edge_form(gen.exclusion_part, nu, f)
    gl = _edge_form(gen.glauber_part, nu, f)
    if f.ndim == 1:
        return float(ex[0]), float(gl[0])
    return ex, gl


def carre_du_champ_identity(gen: GeneratorMatrix, f) -> float:
    """Worst pointwise gap between 1/2 (Q f^2 - 2 f Q f) and the edge sum, over both parts."""
    f = np.asarray(f, dtype=float)
    worst = 0.0
    for Q in (gen.exclusion_part, gen.glauber_part):
        lhs = 0.5 * (Q @ (f * f) - 2 * f * (Q @ f))
        diffsq = Q.copy().tocoo()
        vals = np.where(diffsq.row != diffsq.col, diffsq.data * (f[diffsq.col] - f[diffsq.row]) ** 2, 0.0)
        rhs = 0.5 * np.bincount(diffsq.row, weights=vals, minlength=f.size)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# -- log-Sobolev ratios ---------------------------------------------------------

def _entropy_rows(F: np.ndarray, nu: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(F > 0, F * np.log(np.where(F > 0, F, 1.0)), 0.0)
    return terms @ nu


def single_site_lsi(a: float, b: float) -> float:
    """Best constant for one independent site flipping 0->1 at rate a and 1->0 at rate b.

    Maximizes Ent(f)/E(sqrt f) over densities (f0, f1) with (1-rho) f0 + rho f1 = 1,
    rho = a/(a+b), by a bounded scalar search in f1.
    """
    from scipy.optimize import minimize_scalar

    rho = a / (a + b)
    flux = a * (1 - rho)

    def neg_ratio(f1):
        f0 = (1 - rho * f1) / (1 - rho)
        ent = (1 - rho) * f0 * math.log(f0) + rho * f1 * math.log(f1) if f0 > 0 else rho * f1 * math.log(f1)
        form = flux * (math.sqrt(f1) - math.sqrt(max(f0, 0.0))) ** 2
        return -ent / form

    # f -> 1 limit of the ratio, Var(f) / 2 over flux (f1 - f0)^2 / 4
    best = 2.0 * rho * (1.0 - rho) / flux
    hi = 1.0 / rho
    for lo_, hi_ in ((1e-9, 1.0 - 1e-3), (1.0 + 1e-3, hi)):
        res = minimize_scalar(neg_ratio, bounds=(lo_, hi_), method="bounded", options={"xatol": 1e-10})
        best = max(best, -res.fun, -neg_ratio(lo_), -neg_ratio(hi_))
    return best


def random_densities(n_states: int, count: int, rng=None, nu=None) -> np.ndarray:
    """Densities exp(s Z) normalized under ``nu``, with spreads s cycling over a log grid."""
    rng = np.random.default_rng(rng)
    nu = np.full(n_states, 1.0 / n_states) if nu is None else nu
    spreads = np.array([0.05, 0.2, 0.5, 1.0, 2.0, 4.0])
    s = spreads[np.arange(count) % spreads.size][:, None]
    F = np.exp(s * rng.standard_normal((count, n_states)))
    return F / (F @ nu)[:, None]


def lsi_constant(params: ModelParams, samples: int = 10_000, rng=None) -> dict:
    """Largest observed H(f nu | nu) / int Gamma_r(sqrt f) dnu.

    Candidates: ``samples`` random densities, near-constant densities 1 + eps h,
    and products over one site of the single-site extremal profile.
    """
    gen = build_generator(params)
    N = gen.n_sites
    if N > 10:
        raise StateSpaceTooLargeError("log-Sobolev search is limited to 10 sites")
    rng = np.random.default_rng(rng)
    nu = gen.stationary_reference()
    cands = [random_densities(gen.dimension, samples, rng, nu)]
    h = rng.standard_normal((64, gen.dimension))
    h = h - (h @ nu)[:, None]
    h = h / np.max(np.abs(h), axis=1, keepdims=True)
    for eps in (1e-3, 1e-2, 1e-1):
        cands.append(1.0 + eps * h)
    rho = params.rho_star
    for f1 in np.concatenate([np.linspace(0.02, 0.98, 25), np.linspace(1.02, 0.98 / rho, 25)]):
        f0 = (1 - rho * f1) / (1 - rho)
        prof = np.where(gen.bits[:, 0] == 1, f1, f0)
        cands.append(prof[None, :])
    F = np.vstack(cands)
    ent = _entropy_rows(F, nu)
    form = _edge_form(gen.glauber_part, nu, np.sqrt(F))
    keep = form > 1e-14
    ratio = ent[keep] / form[keep]
    # f = 1 + eps h as eps -> 0: the ratio tends to 2 Var(h) / E(h)
    site = gen.bits[:, :1].T - rho
    dirs = np.vstack([h, site])
    var = (dirs ** 2) @ nu - (dirs @ nu) ** 2
    lin = _edge_form(gen.glauber_part, nu, dirs)
    ok = lin > 1e-14
    limits = 2.0 * var[ok] / lin[ok]
    return {"kappa": float(max(np.max(ratio), np.max(limits))), "evaluated": int(keep.sum() + ok.sum())}


# -- mean curve, correlations, entropy ----------------------------------------------

@dataclass
class MeanCurve:
    times: np.ndarray
    mean: np.ndarray
    site_spread: np.ndarray
    residual: np.ndarray
    sup_deviation: float
    normalized: float


def mean_curve(gen: GeneratorMatrix, t_max: float = 1.0, num: int = 41) -> MeanCurve:
    """m_t = E eta_x(t) from the product measure at rho*, and m_t' - F(m_t)."""
    p = gen.params
    times, mus = evolve_grid(gen, gen.stationary_reference(), t_max, num)
    bits = gen.bits.astype(float)
    means = mus @ bits
    m = means[:, 0]
    spread = np.max(np.abs(means - m[:, None]), axis=1)
    drift = gen.combined @ bits[:, 0]
    slope = mus @ drift
    residual = slope - p.F(m)
    sup = float(np.max(np.abs(m - p.rho_star)))
    return MeanCurve(times, m, spread, residual, sup, sup * p.n_sites)


def two_point_correlation(gen: GeneratorMatrix, mu) -> tuple[float, float]:
    """``(max_{x != y} |Cov(eta_x, eta_y)|, n^d times that)`` under ``mu``."""
    bits = gen.bits.astype(float)
    m = mu @ bits
    second = bits.T @ (bits * mu[:, None])
    cov = second - np.outer(m, m)
    np.fill_diagonal(cov, 0.0)
    sup = float(np.max(np.abs(cov)))
    return sup, sup * gen.n_sites


def sup_correlation(params: ModelParams, t_max: float = 1.0, num: int = 41) -> float:
    gen = build_generator(params)
    _, mus = evolve_grid(gen, gen.stationary_reference(), t_max, num)
    return max(two_point_correlation(gen, mu)[0] for mu in mus)


def sup_entropy(params: ModelParams, t_max: float = 1.0, num: int = 41) -> float:
    gen = build_generator(params)
    nu = gen.stationary_reference()
    _, mus = evolve_grid(gen, nu, t_max, num)
    return max(relative_entropy(mu, nu) for mu in mus)


# -- replacement inequality -------------------------------------------------------

def replacement_inequality_check(gen: GeneratorMatrix, g, ell: int, gamma: float,
                                 samples: int = 1000, rng=None, i: int = 1, densities=None) -> dict:
    """Worst RHS - LHS of the replacement inequality over sampled densities.

    LHS = int (V_i - V_i^ell) f dnu; RHS = gamma int Gamma_ex(sqrt f) dnu
    + (1 / (2 gamma)) int sum_bonds h^2 f dnu, bonds unordered.
    """
    from .greens import build_flow, replacement_quantities

    p = gen.params
    if p.n_sites > 12:
        raise StateSpaceTooLargeError("replacement check is limited to 12 sites")
    if not ell < p.n / 2:
        raise BlockTooLargeError(f"need ell < n/2, got ell={ell}, n={p.n}")
    flow = build_flow(ell, p.d, p.n)
    diffV = np.empty(gen.dimension)
    hsq = np.empty(gen.dimension)
    for s, eta in enumerate(gen.bits):
        q = replacement_quantities(eta, g, ell, i, p.n, p.d, p.rho_star, flow)
        diffV[s] = q.V - q.V_ell
        hsq[s] = q.h_sq_sum
    nu = gen.stationary_reference()
    rng = np.random.default_rng(rng)
    if densities is None:
        densities = np.vstack([np.ones((1, gen.dimension)),
                               random_densities(gen.dimension, samples - 1, rng, nu)])
    lhs = densities @ (nu * diffV)
    ex = _edge_form(gen.exclusion_part, nu, np.sqrt(densities))
    rhs = gamma * ex + densities @ (nu * hsq) / (2 * gamma)
    margins = rhs - lhs
    worst = int(np.argmin(margins))
    return {"worst_margin": float(margins[worst]), "lhs": float(lhs[worst]), "rhs": float(rhs[worst]),
            "samples": int(densities.shape[0]), "gamma": gamma, "ell": ell}


# -- reporting helpers --------------------------------------------------------------

def fitted_constant(ns, values, max_slope: float = 0.25) -> dict:
    """Boundedness verdict for a statistic observed across system sizes.

    The constant is the largest observed value. The statistic counts as
    bounded when the least-squares log-log slope over the upper half of the
    size range does not exceed ``max_slope``; a value that is still growing
    like a power of n fails.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    C = float(np.max(values))
    upper = ns >= np.median(ns)
    positive = values[upper] > 0
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(ns[upper][positive]), np.log(values[upper][positive]), 1)[0])
    else:
        slope = 0.0
    return {"constant": C, "slope": slope, "bounded": bool(slope <= max_slope and np.all(np.isfinite(values)))}


def check_record(check: str, params: dict, statistic, bound, passed: bool) -> dict:
    return {"check": check, "params": params, "statistic": statistic, "bound": bound, "pass": bool(passed)}


def records_to_json(records, path=None) -> str:
    text = json.dumps(records, indent=2, default=float)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
