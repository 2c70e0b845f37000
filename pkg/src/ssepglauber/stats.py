"""Replica statistics with jackknife standard errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .errors import InsufficientSamplesError, InvalidParametersError

__all__ = ["EstimateRecord", "estimate", "STATISTICS"]

CI_LEVEL = 0.99
MIN_SAMPLES = 30
STATISTICS = ("mean", "variance", "covariance", "correlation", "skewness", "kurtosis")


@dataclass(frozen=True)
class EstimateRecord:
    statistic: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    level: float = CI_LEVEL

    def as_dict(self) -> dict:
        return asdict(self)

    def within(self, target: float, n_se: float) -> bool:
        return abs(self.estimate - target) <= n_se * self.se


def _jackknife_se(loo: np.ndarray) -> float:
    n = loo.size
    return float(math.sqrt(max((n - 1) / n * np.sum((loo - loo.mean()) ** 2), 0.0)))


def _loo_moments(x: np.ndarray):
    n = x.size
    s1 = x.sum()
    s2 = (x * x).sum()
    m = (s1 - x) / (n - 1)
    v = ((s2 - x * x) - (n - 1) * m * m) / (n - 2)
    return m, v


def _loo_cov(x: np.ndarray, y: np.ndarray):
    n = x.size
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    mx = (sx - x) / (n - 1)
    my = (sy - y) / (n - 1)
    return ((sxy - x * y) - (n - 1) * mx * my) / (n - 2)


def _corr(x, y):
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return float("nan")
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def estimate(samples, statistic: str = "mean", other=None) -> EstimateRecord:
    """Point estimate, standard error and 99% normal-theory interval.

    ``covariance`` and ``correlation`` pair ``samples`` with ``other``.
    Mean, variance, covariance and correlation use jackknife errors; skewness
    and (Pearson) kurtosis use the Gaussian asymptotic errors sqrt(6/n) and
    sqrt(24/n).
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if statistic not in STATISTICS:
        raise InvalidParametersError(f"unknown statistic {statistic!r}")
    if statistic == "mean":
        if n < 2:
            raise InsufficientSamplesError("need at least two samples")
    elif n < MIN_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if statistic in ("covariance", "correlation"):
        if other is None:
            raise InvalidParametersError(f"{statistic} needs a second sample vector")
        y = np.asarray(other, dtype=float).ravel()
        if y.size != n:
            raise InvalidParametersError("sample vectors differ in length")

    if statistic == "mean":
        est = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n))
    elif statistic == "variance":
        est = float(x.var(ddof=1))
        se = _jackknife_se(_loo_moments(x)[1])
    elif statistic == "covariance":
        est = float(np.cov(x, y, ddof=1)[0, 1])
        se = _jackknife_se(_loo_cov(x, y))
    elif statistic == "correlation":
        est = _corr(x, y)
        if not np.isfinite(est):
            se = float("nan")
        else:
            loo = np.array([_corr(np.delete(x, i), np.delete(y, i)) for i in range(n)])
            se = _jackknife_se(loo)
    else:
        c = x - x.mean()
        m2 = np.mean(c ** 2)
        if m2 == 0:
            est = 0.0 if statistic == "skewness" else float("nan")
        elif statistic == "skewness":
            est = float(np.mean(c ** 3) / m2 ** 1.5)
        else:
            est = float(np.mean(c ** 4) / m2 ** 2)
        se = math.sqrt((6.0 if statistic == "skewness" else 24.0) / n)
    z = float(norm.ppf(0.5 + CI_LEVEL / 2))
    half = z * se if np.isfinite(se) else float("nan")
    return EstimateRecord(statistic, est, se, est - half, est + half, n)
