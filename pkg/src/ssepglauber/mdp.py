"""Quadratic rate functions for moderate deviations of the occupation time.

``rate_I`` evaluates the finite-dimensional form 1/2 g^T S^{-1} g built from the
covariance alpha. ``rate_Q0`` and ``rate_Qdyn`` evaluate the Gaussian action of
a field path in cosine-mode coordinates, and ``contraction_check`` minimizes
that action under occupation-time constraints and compares the minimum with
the finite-dimensional form.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import (
    InconsistentInputError,
    InvalidParametersError,
    NonconformingGridError,
    OptimizationInfeasibleError,
)
from .limits import CovarianceModel, _drift, _noise, mollifier_coefficients
from .model import ModelParams

__all__ = [
    "RateProblem",
    "rate_I",
    "rate_I_degree_one",
    "rate_Q0",
    "GalerkinPath",
    "rate_Qdyn",
    "mode_precision",
    "ContractionResult",
    "contraction_check",
]

EIGEN_FLOOR = 1e-12


@dataclass
class RateProblem:
    """Targets ``gamma`` at increasing ``times``; ``sigma`` defaults to alpha on those times."""

    times: np.ndarray
    gamma: np.ndarray
    params: ModelParams | None = None
    epsilon: float | None = None
    sigma: np.ndarray | None = None
    K_s: int = 64
    M: int = 256

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if self.times.shape != self.gamma.shape:
            raise InconsistentInputError("times and targets differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise InconsistentInputError("times must be strictly increasing")
        if np.any(self.times < 0):
            raise InconsistentInputError("times must be nonnegative")
        if self.sigma is None:
            if self.params is None:
                raise InconsistentInputError("need either a covariance matrix or model parameters")
            model = CovarianceModel(self.params, epsilon=self.epsilon, horizon=float(self.times.max()))
            self.sigma = model.alpha_matrix(self.times)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.shape != (self.times.size,) * 2:
            raise InconsistentInputError("covariance matrix has the wrong shape")

    def to_json(self) -> str:
        return json.dumps({"times": self.times.tolist(), "gamma": self.gamma.tolist(),
                           "epsilon": self.epsilon, "K_s": self.K_s, "M": self.M,
                           "sigma": self.sigma.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "RateProblem":
        data = json.loads(text)
        return cls(times=data["times"], gamma=data["gamma"], epsilon=data.get("epsilon"),
                   sigma=np.asarray(data["sigma"]), K_s=data.get("K_s", 64), M=data.get("M", 256))


def rate_I(problem: RateProblem) -> float:
    """1/2 gamma^T Sigma^{-1} gamma; +inf when gamma leaves the range of a singular Sigma."""
    S = 0.5 * (problem.sigma + problem.sigma.T)
    g = problem.gamma
    if not np.any(g):
        return 0.0
    floor = EIGEN_FLOOR * max(float(np.trace(S)), 0.0)
    try:
        c, low = linalg.cho_factor(S)
        if np.min(np.abs(np.diag(c))) ** 2 > floor:
            return float(0.5 * g @ linalg.cho_solve((c, low), g))
    except linalg.LinAlgError:
        pass
    w, V = linalg.eigh(S)
    coords = V.T @ g
    keep = w > floor
    if np.any(np.abs(coords[~keep]) > 1e-10 * max(1.0, float(np.linalg.norm(g)))):
        return math.inf
    return float(0.5 * np.sum(coords[keep] ** 2 / w[keep]))


def rate_I_degree_one(problem: RateProblem, slope: float) -> dict:
    """Rate for a degree-one functional evaluated as I(gamma / slope).

    The alternative reading I(gamma) / slope is returned alongside, since the
    two disagree unless slope is 1.
    """
    if slope == 0:
        raise InvalidParametersError("slope must be nonzero")
    scaled = RateProblem(problem.times, problem.gamma / slope, sigma=problem.sigma)
    value = rate_I(scaled)
    return {"value": value, "alternative_first_power": rate_I(problem) / slope,
            "normalization_ambiguous": not math.isclose(abs(slope), 1.0)}


def rate_Q0(coeffs, chi: float) -> float:
    """||mu_0||^2 / (2 chi) in the orthonormal cosine coordinates."""
    c = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(c)):
        return math.inf
    return float(np.sum(c * c) / (2.0 * chi))


@dataclass
class GalerkinPath:
    """Mode coefficients ``coeffs[k, j]`` at grid times ``times[j]``, linear in between."""

    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.times.ndim != 1 or self.times.size < 2 or self.times[0] != 0:
            raise NonconformingGridError("time grid must start at 0 and have at least two points")
        if np.any(np.diff(self.times) <= 0):
            raise NonconformingGridError("time grid must be strictly increasing")
        if self.coeffs.shape[1] != self.times.size:
            raise NonconformingGridError("coefficient columns must match the time grid")
        if not np.all(np.isfinite(self.coeffs)):
            raise NonconformingGridError("path coefficients must be finite")

    @property
    def K_s(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def uniform(cls, coeffs, T: float) -> "GalerkinPath":
        coeffs = np.atleast_2d(coeffs)
        return cls(np.linspace(0.0, T, coeffs.shape[1]), coeffs)

    def integral(self, t_index: int) -> np.ndarray:
        """int_0^{t_j} coeffs[k](s) ds per mode (trapezoid, exact for linear pieces)."""
        h = np.diff(self.times[: t_index + 1])
        c = self.coeffs[:, : t_index + 1]
        return np.sum(0.5 * h * (c[:, 1:] + c[:, :-1]), axis=1)


def rate_Qdyn(path: GalerkinPath, params: ModelParams, interpolation: str = "linear") -> float:
    """Gaussian action sum_k int (m_k' - mu_k m_k)^2 / (2 sigma_k^2) dt of a mode path.

    ``interpolation="linear"`` integrates the piecewise-linear path exactly.
    ``"bridge"`` instead takes, on each interval, the least action over all
    paths joining the grid values; it is exact for the deterministic flow and
    never exceeds the linear value.
    """
    k = np.arange(path.K_s + 1)[:, None]
    mu = _drift(k, params)
    s2 = _noise(k, params)
    h = np.diff(path.times)[None, :]
    m0 = path.coeffs[:, :-1]
    m1 = path.coeffs[:, 1:]
    if interpolation == "linear":
        slope = (m1 - m0) / h
        r0 = slope - mu * m0
        r1 = slope - mu * m1
        return float(np.sum(h * (r0 * r0 + r0 * r1 + r1 * r1) / (6.0 * s2)))
    if interpolation == "bridge":
        decay = np.exp(mu * h)
        var = -np.expm1(2.0 * mu * h) / (-2.0 * mu)
        return float(np.sum((m1 - decay * m0) ** 2 / (2.0 * s2 * var)))
    raise InvalidParametersError(f"unknown interpolation {interpolation!r}")


def mode_precision(mu: float, sigma2: float, chi: float, h: float, M: int) -> np.ndarray:
    """Banded (upper, 2 x (M+1)) precision of the quadratic form Q0 + Q_dyn for one mode.

    The action is 1/2 m^T P m for a piecewise-linear path with values m on a
    uniform grid of step h.
    """
    a = -1.0 / h - mu
    b = 1.0 / h
    c = -1.0 / h
    d = 1.0 / h - mu
    # R^T W R with R = [[a, b], [c, d]], W = [[1, 1/2], [1/2, 1]]
    w00 = a * a + a * c + c * c
    w01 = a * b + 0.5 * (a * d + b * c) + c * d
    w11 = b * b + b * d + d * d
    scale = h / (3.0 * sigma2)
    ab = np.zeros((2, M + 1))
    diag = np.zeros(M + 1)
    diag[:-1] += scale * w00
    diag[1:] += scale * w11
    diag[0] += 1.0 / chi
    ab[1] = diag
    ab[0, 1:] = scale * w01
    return ab


@dataclass
class ContractionResult:
    times: list
    gamma: list
    epsilon: float
    K_s: int
    M: int
    variational_value: float
    constrained_value: float
    quadratic_value: float
    gap: float
    path: GalerkinPath | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("path")
        d["value"] = self.variational_value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def contraction_check(params: ModelParams, t_points, gamma, epsilon: float, K_s: int = 64,
                      M: int = 256, T: float | None = None) -> ContractionResult:
    """Minimize Q0 + Q_dyn over Galerkin paths with int_0^{t_i} <mu_s, J_eps> ds = gamma_i.

    The minimizer is obtained from the normal equations of the equality
    constrained quadratic program, then its action is re-evaluated with
    :func:`rate_Q0` and :func:`rate_Qdyn`. The quadratic value comes from the
    closed-form mollified covariance.
    """
    t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if t_points.size > 3:
        raise InvalidParametersError("at most three constraint times are supported")
    if not epsilon or epsilon <= 0:
        raise InvalidParametersError("epsilon must be positive")
    if K_s < 0 or M < 1:
        raise OptimizationInfeasibleError("need at least one mode and one time step")
    T = float(t_points.max()) if T is None else float(T)
    h = T / M
    idx = np.rint(t_points / h).astype(int)
    if np.any(np.abs(idx * h - t_points) > 1e-12 * max(1.0, T)) or np.any(idx < 1) or np.any(idx > M):
        raise NonconformingGridError("constraint times must be positive grid points")
    if np.any(np.diff(t_points) <= 0):
        raise InconsistentInputError("constraint times must be strictly increasing")

    # trapezoid weights for int_0^{t_i}
    Wc = np.zeros((t_points.size, M + 1))
    for i, j in enumerate(idx):
        Wc[i, :j + 1] = h
        Wc[i, 0] = Wc[i, j] = h / 2
    coef = mollifier_coefficients(epsilon, K_s)
    chi = params.chi_star
    S = np.zeros((t_points.size, t_points.size))
    solves = []
    for k in range(K_s + 1):
        ab = mode_precision(float(_drift(k, params)), float(_noise(k, params)), chi, h, M)
        X = linalg.solveh_banded(ab, Wc.T)
        solves.append(X)
        S += coef[k] ** 2 * Wc @ X
    if not np.any(gamma):
        zero = GalerkinPath(np.linspace(0, T, M + 1), np.zeros((K_s + 1, M + 1)))
        return ContractionResult(t_points.tolist(), gamma.tolist(), epsilon, K_s, M, 0.0, 0.0, 0.0, 0.0, zero)
    try:
        lam = linalg.solve(S, gamma, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise OptimizationInfeasibleError("constraint system is singular") from exc
    constrained = float(0.5 * gamma @ lam)
    coeffs = np.array([coef[k] * (solves[k] @ lam) for k in range(K_s + 1)])
    path = GalerkinPath(np.linspace(0.0, T, M + 1), coeffs)
    variational = rate_Q0(coeffs[:, 0], chi) + rate_Qdyn(path, params)
    quad = rate_I(RateProblem(t_points, gamma, sigma=CovarianceModel(params, epsilon=epsilon).alpha_matrix(t_points)))
    return ContractionResult(t_points.tolist(), gamma.tolist(), float(epsilon), int(K_s), int(M),
                             variational, constrained, quad, variational - quad, path)
