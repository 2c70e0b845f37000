"""Heat kernels, the resolvent Green function, minimal-energy flows and
replacement quantities on the discrete torus.

Edge sums come in two conventions. ``unordered`` counts each nearest-neighbour
bond once; ``ordered`` counts both orientations and is exactly twice as large.
Both are reported wherever an energy appears.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from .errors import (
    BlockTooLargeError,
    FlowInfeasibleError,
    InvalidParametersError,
    LatticeTooLargeError,
)
from .model import BlockKernel, beta_dn

__all__ = [
    "laplacian_symbol",
    "heat_kernel",
    "GreenTable",
    "green_function",
    "RWLimit",
    "rw_limit_quantities",
    "infinite_lattice_green_origin",
    "Flow",
    "build_flow",
    "cumulative_flow_1d",
    "ReplacementQuantities",
    "replacement_quantities",
    "h_weights",
    "subgaussian_logmgf_check",
    "subgaussian_weight_families",
    "save_table",
    "load_table",
]

MAX_GREEN_SITES = 2 ** 24


def laplacian_symbol(n: int, d: int) -> np.ndarray:
    """lambda_k = sum_i 2(1 - cos(2 pi k_i / n)) on the ``(n,)*d`` frequency grid."""
    one = 2.0 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    out = np.zeros((n,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = n
        out = out + one.reshape(shape)
    return out


def _torus_laplacian(u: np.ndarray) -> np.ndarray:
    out = -2.0 * u.ndim * u
    for i in range(u.ndim):
        out += np.roll(u, 1, axis=i) + np.roll(u, -1, axis=i)
    return out


def heat_kernel(n: int, d: int, t: float) -> np.ndarray:
    """Transition probabilities p_n(t, x) of the walk with generator n^2 Delta, from 0."""
    if t < 0:
        raise InvalidParametersError("time must be nonnegative")
    hat = np.exp(-t * n * n * laplacian_symbol(n, d))
    p = np.real(np.fft.ifftn(hat))
    return np.clip(p, 0.0, None)


@dataclass
class GreenTable:
    """Values of g_n with (1 - n^2 Delta) g_n = delta_0 on T_n^d."""

    n: int
    d: int
    values: np.ndarray

    @property
    def grad_energy(self) -> float:
        """Sum over unordered bonds of (g(x) - g(y))^2."""
        return float(sum(np.sum((self.values - np.roll(self.values, -1, axis=i)) ** 2) for i in range(self.d)))

    @property
    def grad_energy_ordered(self) -> float:
        return 2.0 * self.grad_energy

    @property
    def sq_norm(self) -> float:
        return float(np.sum(self.values ** 2))

    @property
    def origin(self) -> float:
        return float(self.values[(0,) * self.d])

    def residual(self) -> float:
        """max |(1 - n^2 Delta) g - delta_0|, evaluated in real space."""
        r = self.values - self.n ** 2 * _torus_laplacian(self.values)
        r[(0,) * self.d] -= 1.0
        return float(np.max(np.abs(r)))

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@lru_cache(maxsize=16)
def _green_values(n: int, d: int) -> np.ndarray:
    hat = 1.0 / (1.0 + n * n * laplacian_symbol(n, d))
    g = np.real(np.fft.ifftn(hat))
    g.setflags(write=False)
    return g


def green_function(n: int, d: int) -> GreenTable:
    """Spectral solve; tables are cached per (n, d)."""
    if n < 3 or d not in (1, 2, 3):
        raise InvalidParametersError(f"need n >= 3 and d in (1, 2, 3), got n={n}, d={d}")
    if n ** d > MAX_GREEN_SITES:
        raise LatticeTooLargeError(f"{n}^{d} sites exceeds {MAX_GREEN_SITES}")
    return GreenTable(n, d, _green_values(int(n), int(d)))


@dataclass(frozen=True)
class RWLimit:
    n: int
    d: int
    grad_energy_scaled: float
    grad_energy_scaled_ordered: float
    gn0_scaled: float
    sq_norm: float


def rw_limit_quantities(n: int, d: int) -> RWLimit:
    """n^2 beta^2 sum (grad g)^2 (both conventions), beta^2 g(0) and sum g^2."""
    table = green_function(n, d)
    b2 = beta_dn(n, d) ** 2
    return RWLimit(
        n=n,
        d=d,
        grad_energy_scaled=n * n * b2 * table.grad_energy,
        grad_energy_scaled_ordered=n * n * b2 * table.grad_energy_ordered,
        gn0_scaled=b2 * table.origin,
        sq_norm=table.sq_norm,
    )


def infinite_lattice_green_origin(d: int = 3) -> float:
    """Integral over t of P(walk with generator Delta on Z^d is at 0 at time t).

    Finite only for d >= 3. The integrand is exp(-2t d) I_0(2t)^d.
    """
    if d < 3:
        raise InvalidParametersError("the walk is recurrent for d < 3")

    def p0(t):
        return special.ive(0, 2.0 * t) ** d

    head, _ = integrate.quad(p0, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    tail, _ = integrate.quad(p0, 1.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=500)
    return head + tail


# -- flows -------------------------------------------------------------------

@dataclass
class Flow:
    """Antisymmetric flow on the box {0..2 ell - 2}^d carrying delta_0 to q_ell.

    ``edges[i]`` has shape ``(m,)*d`` with axis ``i`` shortened to ``m - 1``;
    entry ``x`` holds phi(x, x + e_i).
    """

    ell: int
    d: int
    edges: list = field(default_factory=list)

    @property
    def side(self) -> int:
        return 2 * self.ell - 1

    @property
    def energy(self) -> float:
        """Sum over unordered edges of phi^2."""
        return float(sum(np.sum(e ** 2) for e in self.edges))

    @property
    def energy_ordered(self) -> float:
        return 2.0 * self.energy

    def divergence(self) -> np.ndarray:
        """sum_y phi(x, y) at every box site."""
        m = self.side
        div = np.zeros((m,) * self.d)
        for i, e in enumerate(self.edges):
            lo = [slice(None)] * self.d
            hi = [slice(None)] * self.d
            lo[i] = slice(0, m - 1)
            hi[i] = slice(1, m)
            div[tuple(lo)] += e
            div[tuple(hi)] -= e
        return div

    def residual(self) -> float:
        target = -BlockKernel(self.ell, self.d).q
        target[(0,) * self.d] += 1.0
        return float(np.max(np.abs(self.divergence() - target)))

    def value(self, u, v, n: int) -> float:
        """phi(u, v) for torus sites given as coordinate tuples on T_n^d."""
        u = np.asarray(u) % n
        v = np.asarray(v) % n
        diff = (v - u) % n
        axes = np.nonzero(diff)[0]
        if len(axes) != 1:
            return 0.0
        i = int(axes[0])
        m = self.side
        if np.any(u >= m) or np.any(v >= m):
            return 0.0
        if diff[i] == 1 and u[i] + 1 == v[i]:
            return float(self.edges[i][tuple(u)])
        if diff[i] == n - 1 and v[i] + 1 == u[i]:
            return -float(self.edges[i][tuple(v)])
        return 0.0

    def on_torus(self, n: int) -> list:
        """Edge arrays of shape ``(n,)*d``: entry x of array i is phi(x, x + e_i)."""
        if self.side >= n:
            raise FlowInfeasibleError(f"box of side {self.side} does not fit in T_{n}")
        out = []
        for e in self.edges:
            full = np.zeros((n,) * self.d)
            full[tuple(slice(0, s) for s in e.shape)] = e
            out.append(full)
        return out


def build_flow(ell: int, d: int, box_n: int | None = None) -> Flow:
    """Minimal-energy flow from delta_0 to q_ell supported in {0..2 ell - 2}^d.

    Solves the Neumann Poisson problem on the box by a type-II cosine
    transform and takes the potential difference along each edge.
    """
    if int(ell) != ell or ell < 1:
        raise InvalidParametersError(f"block size must be an integer >= 1, got {ell}")
    m = 2 * ell - 1
    if box_n is not None and not ell < box_n / 2:
        raise FlowInfeasibleError(f"box {{0..{m - 1}}}^{d} needs ell < n/2; got ell={ell}, n={box_n}")
    if ell == 1:
        return Flow(1, d, [np.zeros(tuple(0 if j == i else 1 for j in range(d))) for i in range(d)])
    rhs = -BlockKernel(ell, d).q
    rhs[(0,) * d] += 1.0
    one = 2.0 - 2.0 * np.cos(np.pi * np.arange(m) / m)
    eig = np.zeros((m,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = m
        eig = eig + one.reshape(shape)
    coef = sfft.dctn(rhs, type=2, norm="ortho")
    eig[(0,) * d] = 1.0
    coef = coef / eig
    coef[(0,) * d] = 0.0
    u = sfft.idctn(coef, type=2, norm="ortho")
    edges = [-np.diff(u, axis=i) for i in range(d)]
    return Flow(ell, d, edges)


def cumulative_flow_1d(ell: int) -> np.ndarray:
    """The d = 1 flow obtained by accumulating delta_0 - q_ell left to right."""
    rhs = -BlockKernel(ell, 1).q
    rhs[0] += 1.0
    return np.cumsum(rhs)[:-1]


# -- replacement quantities ----------------------------------------------------

@dataclass(frozen=True)
class ReplacementQuantities:
    V: float
    V_ell: float
    V_ell_factorized: float
    h: list
    h_sq_sum: float


def h_weights(flow: Flow, g, i: int, n: int) -> list:
    """Linear maps etabar -> h_{y, y + e_j} for every bond direction j.

    Returns ``W[j]`` of shape ``(N, N)`` with h_{y, y+e_j} = sum_w W[j][y, w] etabar_w.
    Only meant for small tori.
    """
    d = flow.d
    N = n ** d
    gg = np.asarray(g, dtype=float).reshape((n,) * d)
    phis = flow.on_torus(n)
    coords = np.stack(np.unravel_index(np.arange(N), (n,) * d), axis=1)
    ei = np.zeros(d, dtype=np.int64)
    ei[i - 1 if i >= 1 else 0] = 1
    out = []
    for j in range(d):
        W = np.zeros((N, N))
        for w in range(N):
            # etabar_w enters through x = w + e_i with weight g(w)
            x = coords[w] + ei
            shifted = np.roll(phis[j], shift=tuple(x), axis=tuple(range(d)))
            W[:, w] = shifted.ravel() * gg[tuple(coords[w])]
        out.append(W)
    return out


def replacement_quantities(config, g, ell: int, i: int, n: int, d: int, rho: float, flow: Flow | None = None):
    """V_i, V_i^ell (direct and factorized), the h table and its squared sum.

    ``i`` is the bond direction, 1-based. ``h[j]`` holds h_{y, y+e_j} at every y;
    ``h_sq_sum`` sums h^2 over unordered bonds.
    """
    if not ell < n / 2:
        raise BlockTooLargeError(f"need ell < n/2, got ell={ell}, n={n}")
    if not 1 <= i <= d:
        raise InvalidParametersError(f"direction must be in 1..{d}")
    from .model import block_average_fields, _occupancy

    flow = flow or build_flow(ell, d, n)
    shape = (n,) * d
    bar = (_occupancy(config).astype(float) - rho).reshape(shape)
    gg = np.asarray(g, dtype=float).reshape(shape)
    ax = i - 1
    fwd = np.roll(bar, -1, axis=ax)
    V = float(np.sum(bar * fwd * gg))
    left, right, smooth = block_average_fields(bar.ravel() + rho, ell, rho, n, d, gg)
    V_ell = float(np.sum(bar * np.roll(smooth, -1, axis=ax) * gg))
    V_fact = float(np.sum(left * np.roll(right, -1, axis=ax)))
    # h_{y,z} = sum_x phi(y - x, z - x) s(x), s(x) = etabar_{x-e_i} g(x-e_i)
    s = np.roll(bar * gg, 1, axis=ax)
    s_hat = np.fft.fftn(s)
    h = []
    for phi in flow.on_torus(n):
        h.append(np.real(np.fft.ifftn(np.fft.fftn(phi) * s_hat)))
    return ReplacementQuantities(V, V_ell, V_fact, h, float(sum(np.sum(x ** 2) for x in h)))


# -- sub-Gaussian checker --------------------------------------------------------

def _bernoulli_logmgf_excess(x: np.ndarray, rho: float) -> np.ndarray:
    """log E exp(x (eta - rho)) - x^2/8 for eta ~ Bernoulli(rho), computed stably."""
    x = np.asarray(x, dtype=float)
    chi = rho * (1.0 - rho)
    skew = 1.0 - 2.0 * rho
    k3 = chi * skew
    k4 = chi * (1.0 - 6.0 * chi)
    k5 = chi * skew * (1.0 - 12.0 * chi)
    k6 = chi * (1.0 - 30.0 * chi + 120.0 * chi ** 2)
    series = ((chi / 2 - 0.125) * x ** 2 + k3 * x ** 3 / 6 + k4 * x ** 4 / 24
              + k5 * x ** 5 / 120 + k6 * x ** 6 / 720)
    with np.errstate(over="ignore"):
        direct = -x * rho + np.log1p(rho * np.expm1(x)) - x ** 2 / 8
        # for very negative x, expm1 -> -1 and log1p(-rho) is exact enough
    return np.where(np.abs(x) < 1e-2, series, direct)


def subgaussian_logmgf_check(weights, rho: float, r_grid) -> float:
    """max over r of log E exp(r X) - r^2 sigma^2 / 2 for X = sum w_i etabar_i.

    sigma^2 = sum w_i^2 / 4. The difference is accumulated per weight so that
    the result does not suffer cancellation near r = 0. Nonpositive means no
    violation.
    """
    w = np.asarray(weights, dtype=float).ravel()
    w = w[w != 0]
    r = np.asarray(r_grid, dtype=float).ravel()
    if w.size == 0:
        return 0.0
    excess = _bernoulli_logmgf_excess(np.outer(r, w), rho).sum(axis=1)
    return float(np.max(excess))


def _reflect(a: np.ndarray) -> np.ndarray:
    """out[w] = a[-w] on the torus."""
    return np.roll(np.flip(a), 1, axis=tuple(range(a.ndim)))


def subgaussian_weight_families(n: int = 64, ell: int = 8, green_n: int = 64) -> dict:
    """Linear-statistic weights arising in the second-order estimates.

    Includes a single site, the uniform block p_ell and its square q_ell in
    d = 1 and 2, the left block average weighted by g_n, and the flow-weighted
    h coefficients for g = g_n and g = 1.
    """
    fam = {"single": np.array([1.0])}
    for d in (1, 2):
        k = BlockKernel(ell, d)
        fam[f"block_p_d{d}"] = k.p.ravel()
        fam[f"block_q_d{d}"] = k.q.ravel()
    for d in (1, 2):
        nn = green_n if d == 1 else min(green_n, 32)
        g = green_function(nn, d).values
        p, _ = BlockKernel(ell, d).on_torus(nn)
        e1 = np.zeros(d, dtype=np.int64)
        e1[0] = 1
        # left average at 0: weight p(-w) g(w) on etabar_w
        fam[f"left_green_d{d}"] = (_reflect(p) * g).ravel()
        # h_{0, e_1} with i = 1: weight phi(-w - e_1, -w) g(w) on etabar_w
        phi0 = build_flow(ell, d, nn).on_torus(nn)[0]
        flow_part = _reflect(np.roll(phi0, 1, axis=0))
        fam[f"flow_green_d{d}"] = (flow_part * g).ravel()
        fam[f"flow_unit_d{d}"] = flow_part.ravel()
    return fam


# -- serialization -------------------------------------------------------------

_HEADER = struct.Struct("<qqq")


def save_table(path, payload: np.ndarray, n: int, d: int, ell: int = 0):
    """Flat binary: int64 header (n, d, ell) followed by float64 values."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(int(n), int(d), int(ell)))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def load_table(path):
    """Inverse of :func:`save_table`; returns ``(n, d, ell, values)``."""
    with open(path, "rb") as fh:
        n, d, ell = _HEADER.unpack(fh.read(_HEADER.size))
        values = np.frombuffer(fh.read(), dtype="<f8").copy()
    return n, d, ell, values


def flow_payload(flow: Flow) -> np.ndarray:
    """Edge values in canonical order: direction-major, then row-major over the box."""
    return np.concatenate([e.ravel() for e in flow.edges]) if flow.edges else np.zeros(0)


def flow_from_payload(ell: int, d: int, values: np.ndarray) -> Flow:
    m = 2 * ell - 1
    edges, pos = [], 0
    for i in range(d):
        shape = tuple(m - 1 if j == i else m for j in range(d))
        size = int(np.prod(shape))
        edges.append(values[pos:pos + size].reshape(shape))
        pos += size
    return Flow(ell, d, edges)


def green_csv_rows(table: GreenTable):
    coords = np.stack(np.unravel_index(np.arange(table.n ** table.d), (table.n,) * table.d), axis=1)
    for c, v in zip(coords, table.flat()):
        yield [*map(int, c), float(v)]


def flow_csv_rows(flow: Flow):
    for i, e in enumerate(flow.edges):
        for idx in np.ndindex(e.shape):
            yield [i + 1, *idx, float(e[idx])]
