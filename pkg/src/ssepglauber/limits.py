"""Limiting Gaussian objects: Ornstein-Uhlenbeck Fourier modes of the
fluctuation field, the occupation-time covariance and its mollified version,
the two-dimensional Brownian variance and degree-one linearization.

The field is expanded in the real basis 1, sqrt(2) cos(2 pi k x) on [0, 1).
Sine modes never enter because both the point mass at 0 and an even
mollifier have vanishing sine coefficients.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidParametersError, TruncationInsufficientError
from .model import LocalFunction, ModelParams

__all__ = [
    "OUModeModel",
    "ou_mode_covariance",
    "bump_transform",
    "mollifier_coefficients",
    "CovarianceModel",
    "bm_variance_2d",
    "phi_f",
    "phi_f_polynomial",
    "is_degree_one",
    "write_alpha_csv",
]

DEFAULT_K = 10_000
BUMP_CUTOFF = 1000.0
# beyond the cutoff the transform is below quadrature round-off
BUMP_TAIL = 1e-15


def _drift(k, params: ModelParams):
    return -4.0 * np.pi ** 2 * np.asarray(k, dtype=float) ** 2 + params.Fprime_star


def _noise(k, params: ModelParams):
    return 8.0 * np.pi ** 2 * np.asarray(k, dtype=float) ** 2 * params.chi_star + params.G_star


@dataclass(frozen=True)
class OUModeModel:
    """One cosine mode y_k of the limiting field: dy = mu y dt + sigma dW, Var y(0) = chi."""

    k: int
    params: ModelParams

    @property
    def drift(self) -> float:
        return float(_drift(self.k, self.params))

    @property
    def noise_variance(self) -> float:
        return float(_noise(self.k, self.params))

    @property
    def initial_variance(self) -> float:
        return self.params.chi_star

    @property
    def stationary_variance(self) -> float:
        return self.noise_variance / (-2.0 * self.drift)

    def covariance(self, u, v):
        return ou_mode_covariance(self.k, u, v, self.params)

    def sample(self, times, size: int, rng=None) -> np.ndarray:
        """Exact Gaussian transitions on the given increasing time grid."""
        rng = np.random.default_rng(rng)
        times = np.asarray(times, dtype=float)
        mu, s2 = self.drift, self.noise_variance
        out = np.empty((size, times.size))
        y = rng.normal(0.0, math.sqrt(self.initial_variance), size)
        prev = 0.0
        for j, t in enumerate(times):
            h = t - prev
            decay = math.exp(mu * h)
            var = s2 * (-math.expm1(2 * mu * h)) / (-2 * mu)
            y = decay * y + rng.normal(0.0, math.sqrt(var), size)
            out[:, j] = y
            prev = t
        return out


def ou_mode_covariance(k, u, v, params: ModelParams):
    """Cov(y_k(u), y_k(v)) for a mode started from N(0, chi)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise InvalidParametersError("times must be nonnegative")
    mu = _drift(k, params)
    stat = _noise(k, params) / (-2.0 * mu)
    return stat * np.exp(mu * np.abs(u - v)) + (params.chi_star - stat) * np.exp(mu * (u + v))


def _excess(y):
    """(y - 1 + e^{-y}) for y >= 0 without cancellation."""
    y = np.asarray(y, dtype=float)
    small = y < 1e-3
    ys = np.where(small, y, 0.0)
    series = ys ** 2 / 2 - ys ** 3 / 6 + ys ** 4 / 24 - ys ** 5 / 120
    return np.where(small, series, y + np.expm1(-y))


def _mode_double_integrals(mu, t, s):
    """Per-mode (int int e^{mu|u-v|}, int int e^{mu(u+v)}) over [0,t] x [0,s]."""
    m = -mu

    def R(x):
        return 2.0 * _excess(m * x) / m ** 2

    same = 0.5 * (R(t) + R(s) - R(abs(t - s)))
    cross = (np.expm1(mu * t) / mu) * (np.expm1(mu * s) / mu)
    return same, cross


@lru_cache(maxsize=8)
def _bump_nodes(n_nodes: int = 4000):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    with np.errstate(divide="ignore", over="ignore"):
        j = np.where(np.abs(x) < 1, np.exp(-1.0 / (1.0 - x * x)), 0.0)
    j = j / np.sum(w * j)
    return x, w * j


def bump_transform(omega) -> np.ndarray:
    """Cosine transform of the unit-mass bump exp(-1/(1-u^2)) on (-1, 1).

    Values beyond ``BUMP_CUTOFF`` are set to zero; there the true transform
    is smaller than the quadrature round-off.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    x, wj = _bump_nodes()
    out = np.zeros_like(omega)
    live = np.abs(omega) <= BUMP_CUTOFF
    for start in range(0, int(live.sum()), 2048):
        idx = np.nonzero(live)[0][start:start + 2048]
        out[idx] = np.cos(np.outer(omega[idx], x)) @ wj
    return out


def mollifier_coefficients(epsilon: float | None, K: int) -> np.ndarray:
    """Cosine coefficients of J_eps (or of delta_0 when ``epsilon`` is None/0) for k = 0..K."""
    k = np.arange(K + 1)
    c = np.full(K + 1, math.sqrt(2.0))
    c[0] = 1.0
    if epsilon:
        c = c * bump_transform(2.0 * np.pi * k * epsilon)
    return c


class CovarianceModel:
    """Occupation-time covariance alpha(t, s) as a truncated mode series.

    Parameters
    ----------
    params : ModelParams
        Only the derived constants (chi, F', G) are used.
    epsilon : float, optional
        Mollifier width. ``None`` gives the covariance of the point evaluation.
    K : int, optional
        Number of cosine modes kept. When omitted it is chosen from ``tol`` and
        ``horizon`` so that the tail majorant stays below ``tol``.
    """

    def __init__(self, params: ModelParams, epsilon: float | None = None, K: int | None = None,
                 tol: float = 1e-6, horizon: float = 1.0):
        if params.Fprime_star >= 0:
            raise InvalidParametersError("the reaction slope at rho* must be negative")
        self.params = params
        self.epsilon = epsilon or None
        self.tol = tol
        if K is None:
            if self.epsilon:
                K = int(math.ceil(BUMP_CUTOFF / (2 * math.pi * self.epsilon)))
            else:
                K = max(DEFAULT_K, int(math.ceil(self._tail_constant(DEFAULT_K) * horizon / (math.pi ** 2 * tol))))
        self.K = int(K)
        k = np.arange(self.K + 1)
        self.coeffs = mollifier_coefficients(self.epsilon, self.K)
        self.drifts = _drift(k, params)
        self.stationary = _noise(k, params) / (-2.0 * self.drifts)

    def _tail_constant(self, K):
        kk = K + 1
        dk = float(_noise(kk, self.params) / (-2.0 * _drift(kk, self.params)))
        return max(self.params.chi_star, dk)

    def tail_bound(self, t: float, s: float) -> float:
        """Majorant of the omitted modes k > K."""
        base = self._tail_constant(self.K) * min(t, s) / (math.pi ** 2 * self.K)
        if self.epsilon:
            return base * BUMP_TAIL ** 2
        return base

    def mode_terms(self, t: float, s: float) -> np.ndarray:
        """Per-mode contributions c_k^2 int_0^t int_0^s Cov(y_k(u), y_k(v)) du dv."""
        if t < 0 or s < 0:
            raise InvalidParametersError("times must be nonnegative")
        same, cross = _mode_double_integrals(self.drifts, t, s)
        chi = self.params.chi_star
        return self.coeffs ** 2 * (self.stationary * same + (chi - self.stationary) * cross)

    def alpha(self, t: float, s: float) -> float:
        t, s = float(t), float(s)
        if t > s:
            t, s = s, t
        return float(np.sum(self.mode_terms(t, s)))

    def alpha_with_bound(self, t: float, s: float, tol: float | None = None):
        """``(value, tail_bound)``; raises when the bound exceeds ``tol``."""
        value = self.alpha(t, s)
        bound = self.tail_bound(t, s)
        tol = self.tol if tol is None else tol
        if bound > tol:
            raise TruncationInsufficientError(
                f"tail bound {bound:.3g} exceeds tolerance {tol:.3g} at K={self.K}"
            )
        return value, bound

    def alpha_matrix(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        k = times.size
        out = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                out[i, j] = out[j, i] = self.alpha(times[i], times[j])
        return out


def bm_variance_2d(t: float, params: ModelParams, green_limit: float | None = None):
    """``(chi t / pi, 2 chi L t)`` where L is a Green-function gradient-energy value.

    ``L`` defaults to 1/(2 pi), making both entries equal; pass the finite-n
    value from :func:`ssepglauber.greens.rw_limit_quantities` to cross-check.
    """
    if params.d != 2:
        raise InvalidParametersError("the Brownian limit applies in d = 2")
    limit = 1.0 / (2.0 * math.pi) if green_limit is None else green_limit
    chi = params.chi_star
    return chi * t / math.pi, 2.0 * chi * limit * t


def phi_f_polynomial(f: LocalFunction) -> Polynomial:
    """E under Bernoulli(rho) product measure of ``f`` as a polynomial in rho."""
    w = f.width
    rho = Polynomial([0.0, 1.0])
    total = Polynomial([0.0])
    for pattern in range(2 ** w):
        ones = bin(pattern).count("1")
        total = total + f.table[pattern] * rho ** ones * (1 - rho) ** (w - ones)
    return total


def phi_f(f: LocalFunction, rho: float):
    """``(phi_f(rho), phi_f'(rho))``."""
    poly = phi_f_polynomial(f)
    return float(poly(rho)), float(poly.deriv()(rho))


def is_degree_one(f: LocalFunction, rho: float, tol: float = 1e-10) -> bool:
    value, slope = phi_f(f, rho)
    return abs(value) <= tol and abs(slope) > tol


def write_alpha_csv(path, model: CovarianceModel, times):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "s", "alpha"])
        for t in times:
            for s in times:
                out.writerow([t, s, repr(model.alpha(t, s))])
