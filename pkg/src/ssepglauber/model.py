"""Lattice, parameters, local rates and block averages.

Sites of the torus T_n^d are indexed row-major over ``[0, n)^d``; all
displacements wrap modulo ``n``. Configurations are arrays of 0/1 values of
length ``n**d`` in that order (or :class:`LatticeConfig` objects, which store
them bit-packed).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect

from .errors import BlockTooLargeError, InvalidParametersError

__all__ = [
    "reaction",
    "reaction_prime",
    "solve_rho_star",
    "beta_dn",
    "ModelParams",
    "site_coords",
    "site_index",
    "neighbor_table",
    "bond_table",
    "LatticeConfig",
    "flip_rate",
    "flip_rates",
    "drift_decomposition",
    "BlockKernel",
    "block_averages",
    "block_average_fields",
    "LocalFunction",
]


def reaction(rho, a, b, lam):
    """F(rho) = (a + lam*rho)(1 - rho) - b*rho."""
    return (a + lam * rho) * (1.0 - rho) - b * rho


def reaction_prime(rho, a, b, lam):
    return lam * (1.0 - rho) - (a + lam * rho) - b


def _check_rates(a, b, lam):
    if not (a > 0 and b > 0 and lam > -a):
        raise InvalidParametersError(
            f"need a > 0, b > 0, lambda > -a; got a={a}, b={b}, lambda={lam}"
        )


def solve_rho_star(a: float, b: float, lam: float) -> float:
    """Unique zero of the reaction function in (0, 1).

    Bisection on the bracket [0, 1] (F(0) = a > 0, F(1) = -b < 0); avoids the
    cancellation the quadratic formula suffers when ``lam`` is close to 0.
    """
    _check_rates(a, b, lam)
    root = bisect(reaction, 0.0, 1.0, args=(a, b, lam), xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(root)


def beta_dn(n: int, d: int) -> float:
    """Occupation-time scaling: sqrt(n), n/sqrt(log n), n for d = 1, 2, >= 3."""
    if d == 1:
        return math.sqrt(n)
    if d == 2:
        return n / math.sqrt(math.log(n))
    return float(n)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters (n, d, a, b, lam) together with derived constants.

    ``lam`` is the interaction strength (``lambda`` in the literature).
    """

    n: int
    d: int
    a: float = 1.0
    b: float = 1.0
    lam: float = 0.0
    rho_star: float = field(init=False)
    chi_star: float = field(init=False)
    Fprime_star: float = field(init=False)
    G_star: float = field(init=False)
    beta_dn: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidParametersError(f"lattice side n must be an integer >= 3, got {self.n}")
        if self.d not in (1, 2, 3):
            raise InvalidParametersError(f"dimension must be 1, 2 or 3, got {self.d}")
        _check_rates(self.a, self.b, self.lam)
        rho = solve_rho_star(self.a, self.b, self.lam)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "rho_star", rho)
        object.__setattr__(self, "chi_star", rho * (1.0 - rho))
        object.__setattr__(self, "Fprime_star", reaction_prime(rho, self.a, self.b, self.lam))
        object.__setattr__(self, "G_star", reaction(rho, self.a, self.b, self.lam) + 2.0 * self.b * rho)
        object.__setattr__(self, "beta_dn", beta_dn(self.n, self.d))

    @property
    def n_sites(self) -> int:
        return self.n ** self.d

    @property
    def n_bonds(self) -> int:
        return self.d * self.n ** self.d

    @property
    def max_flip_rate(self) -> float:
        """Uniform bound a + max(lam, 0) + b on the flip rates."""
        return self.a + max(self.lam, 0.0) + self.b

    @property
    def perturbative(self) -> bool:
        """False when |lam| > 0.25 min(a, b), outside the small-interaction regime."""
        return abs(self.lam) <= 0.25 * min(self.a, self.b)

    def F(self, rho):
        return reaction(rho, self.a, self.b, self.lam)

    def with_(self, **changes) -> "ModelParams":
        base = dict(n=self.n, d=self.d, a=self.a, b=self.b, lam=self.lam)
        base.update(changes)
        return ModelParams(**base)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "a": self.a,
            "b": self.b,
            "lambda": self.lam,
            "rho_star": self.rho_star,
            "chi_star": self.chi_star,
            "Fprime_star": self.Fprime_star,
            "G_star": self.G_star,
            "beta_dn": self.beta_dn,
            "perturbative": self.perturbative,
        }


# -- torus geometry ---------------------------------------------------------

def site_coords(index, n: int, d: int) -> np.ndarray:
    """Row-major site index -> coordinates (last axis fastest)."""
    return np.stack(np.unravel_index(np.asarray(index), (n,) * d), axis=-1)


def site_index(coords, n: int) -> np.ndarray:
    coords = np.asarray(coords) % n
    d = coords.shape[-1]
    return np.ravel_multi_index(tuple(np.moveaxis(coords, -1, 0)), (n,) * d)


def neighbor_table(n: int, d: int) -> np.ndarray:
    """Array ``(n**d, 2d)``: column ``2i`` is x + e_i, column ``2i+1`` is x - e_i."""
    idx = np.arange(n ** d).reshape((n,) * d)
    cols = []
    for i in range(d):
        cols.append(np.roll(idx, -1, axis=i).ravel())
        cols.append(np.roll(idx, 1, axis=i).ravel())
    return np.stack(cols, axis=1).astype(np.int64)


def bond_table(n: int, d: int) -> np.ndarray:
    """Unordered nearest-neighbour bonds as ``(d * n**d, 2)``; bond ``x*d + i`` is (x, x + e_i)."""
    nbr = neighbor_table(n, d)
    x = np.repeat(np.arange(n ** d), d)
    y = nbr[:, 0::2].ravel()
    return np.stack([x, y], axis=1)


def _occupancy(config) -> np.ndarray:
    if isinstance(config, LatticeConfig):
        return config.to_array()
    return np.asarray(config)


class LatticeConfig:
    """Occupation variables on T_n^d, stored bit-packed.

    Mutated in place by :meth:`swap` and :meth:`flip`; intended for a single
    owner. ``particle_count`` is maintained incrementally.
    """

    def __init__(self, n: int, d: int, occupancy=None):
        self.n = int(n)
        self.d = int(d)
        size = self.n ** self.d
        if occupancy is None:
            occupancy = np.zeros(size, dtype=np.uint8)
        occupancy = np.asarray(occupancy).ravel()
        if occupancy.size != size:
            raise InvalidParametersError(f"expected {size} sites, got {occupancy.size}")
        if not np.all((occupancy == 0) | (occupancy == 1)):
            raise InvalidParametersError("occupancy values must be 0 or 1")
        self._bits = np.packbits(occupancy.astype(np.uint8), bitorder="little")
        self.particle_count = int(occupancy.sum())

    @classmethod
    def random(cls, n: int, d: int, rho: float, rng=None) -> "LatticeConfig":
        rng = np.random.default_rng(rng)
        return cls(n, d, (rng.random(n ** d) < rho).astype(np.uint8))

    @property
    def n_sites(self) -> int:
        return self.n ** self.d

    def __len__(self):
        return self.n_sites

    def __getitem__(self, x: int) -> int:
        x = int(x)
        return int((self._bits[x >> 3] >> (x & 7)) & 1)

    def _set(self, x: int, value: int):
        byte, bit = x >> 3, x & 7
        if value:
            self._bits[byte] |= np.uint8(1 << bit)
        else:
            self._bits[byte] &= np.uint8(~(1 << bit) & 0xFF)

    def flip(self, x: int):
        v = self[x]
        self._set(x, 1 - v)
        self.particle_count += 1 - 2 * v

    def swap(self, x: int, y: int):
        vx, vy = self[x], self[y]
        if vx != vy:
            self._set(x, vy)
            self._set(y, vx)

    def to_array(self) -> np.ndarray:
        return np.unpackbits(self._bits, count=self.n_sites, bitorder="little")

    def copy(self) -> "LatticeConfig":
        return LatticeConfig(self.n, self.d, self.to_array())

    def __eq__(self, other):
        if not isinstance(other, LatticeConfig):
            return NotImplemented
        return self.n == other.n and self.d == other.d and np.array_equal(self._bits, other._bits)

    def __repr__(self):
        return f"LatticeConfig(n={self.n}, d={self.d}, particles={self.particle_count})"


# -- rates ------------------------------------------------------------------

def flip_rates(config, params: ModelParams) -> np.ndarray:
    """c_x(eta) for every site (vectorised)."""
    eta = _occupancy(config).astype(float)
    nbr = neighbor_table(params.n, params.d)
    occupied_nbrs = eta[nbr].sum(axis=1)
    birth = params.a + params.lam / (2 * params.d) * occupied_nbrs
    return birth * (1.0 - eta) + params.b * eta


def flip_rate(config, x: int, params: ModelParams) -> float:
    eta = _occupancy(config)
    nbr = neighbor_table(params.n, params.d)[x]
    birth = params.a + params.lam / (2 * params.d) * float(eta[nbr].sum())
    return float(birth * (1 - eta[x]) + params.b * eta[x])


def drift_decomposition(config, params: ModelParams):
    """Both sides of the centred expansion of c_x(eta)(1 - 2 eta_x).

    Returns ``(direct, expanded)`` arrays over sites, where ``expanded`` is
    -(a + lam rho + b) etabar_x + lam(1-rho)/(2d) sum_y etabar_y
    - lam/(2d) sum_y etabar_y etabar_x, the sum running over neighbours y of x.
    The linear coefficients add up to F'(rho), as they must.
    """
    eta = _occupancy(config).astype(float)
    rho, lam, d = params.rho_star, params.lam, params.d
    direct = flip_rates(eta, params) * (1.0 - 2.0 * eta)
    bar = eta - rho
    nb = bar[neighbor_table(params.n, d)].sum(axis=1)
    expanded = -(params.a + lam * rho + params.b) * bar + lam * (1 - rho) / (2 * d) * nb - lam / (2 * d) * nb * bar
    return direct, expanded


# -- block kernels ------------------------------------------------------------

@dataclass(frozen=True)
class BlockKernel:
    """Uniform weights p_ell on the cube {0..ell-1}^d and q_ell = p_ell * p_ell.

    Both are stored as dense arrays anchored at the origin: ``p`` has shape
    ``(ell,)*d`` and ``q`` has shape ``(2 ell - 1,)*d``. Note that q_ell is
    centred at (ell-1, ..., ell-1), not at the origin.
    """

    ell: int
    d: int

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidParametersError(f"block size must be an integer >= 1, got {self.ell}")

    @property
    def p1(self) -> np.ndarray:
        return np.full(self.ell, 1.0 / self.ell)

    @property
    def q1(self) -> np.ndarray:
        ell = self.ell
        j = np.arange(2 * ell - 1)
        return (ell - np.abs(j - (ell - 1))) / ell ** 2

    @staticmethod
    def _outer(v, d):
        out = v
        for _ in range(d - 1):
            out = np.multiply.outer(out, v)
        return out

    @property
    def p(self) -> np.ndarray:
        return self._outer(self.p1, self.d)

    @property
    def q(self) -> np.ndarray:
        return self._outer(self.q1, self.d)

    def on_torus(self, n: int):
        """(p_ell, q_ell) as arrays of shape ``(n,)*d`` indexed by displacement."""
        if not self.ell < n / 2:
            raise BlockTooLargeError(f"need ell < n/2, got ell={self.ell}, n={n}")
        p = np.zeros((n,) * self.d)
        q = np.zeros((n,) * self.d)
        p[(slice(0, self.ell),) * self.d] = self.p
        q[(slice(0, 2 * self.ell - 1),) * self.d] = self.q
        return p, q


def _circ_corr(kernel, field_):
    """out[x] = sum_y kernel[y] field[x + y] on the torus."""
    return np.real(np.fft.ifftn(np.conj(np.fft.fftn(kernel)) * np.fft.fftn(field_)))


def _circ_conv(kernel, field_):
    """out[x] = sum_y kernel[y] field[x - y] on the torus."""
    return np.real(np.fft.ifftn(np.fft.fftn(kernel) * np.fft.fftn(field_)))


def block_average_fields(config, ell: int, rho: float, n: int, d: int, g=None):
    """Left, right and q-smoothed block averages at every site.

    Returns arrays of shape ``(n,)*d``:
    ``left[x] = sum_y p(y) etabar_{x-y} g(x-y)``,
    ``right[x] = sum_y p(y) etabar_{x+y}``,
    ``smooth[x] = sum_y q(y) etabar_{x+y}``.
    """
    p, q = BlockKernel(ell, d).on_torus(n)
    bar = (_occupancy(config).astype(float) - rho).reshape((n,) * d)
    gg = np.ones((n,) * d) if g is None else np.asarray(g, dtype=float).reshape((n,) * d)
    left = _circ_conv(p, bar * gg)
    right = _circ_corr(p, bar)
    smooth = _circ_corr(q, bar)
    return left, right, smooth


def block_averages(config, x: int, ell: int, rho: float, n: int, d: int, g=None):
    """(left_avg, right_avg, q_avg) at the single site ``x`` (direct sums)."""
    if not ell < n / 2:
        raise BlockTooLargeError(f"need ell < n/2, got ell={ell}, n={n}")
    kern = BlockKernel(ell, d)
    bar = _occupancy(config).astype(float) - rho
    gg = np.ones(n ** d) if g is None else np.asarray(g, dtype=float).ravel()
    xc = site_coords(x, n, d)
    left = right = smooth = 0.0
    for y in itertools.product(range(ell), repeat=d):
        w = kern.p[y]
        back = int(site_index(xc - np.array(y), n))
        fwd = int(site_index(xc + np.array(y), n))
        left += w * bar[back] * gg[back]
        right += w * bar[fwd]
    for y in itertools.product(range(2 * ell - 1), repeat=d):
        smooth += kern.q[y] * bar[int(site_index(xc + np.array(y), n))]
    return float(left), float(right), float(smooth)


# -- local functions ------------------------------------------------------------

class LocalFunction:
    """A function of the occupations on a window of sites 0, 1, ..., w-1.

    The window runs along the last lattice axis. Values are kept as a table
    indexed by the window pattern with bit ``j`` equal to eta_j.
    """

    MAX_WINDOW = 3

    def __init__(self, table: Sequence[float], name: str | None = None):
        table = np.asarray(table, dtype=float)
        w = int(round(math.log2(table.size))) if table.size else -1
        if table.ndim != 1 or w < 1 or 2 ** w != table.size:
            raise InvalidParametersError("table length must be 2**w for a window width w >= 1")
        if w > self.MAX_WINDOW:
            raise InvalidParametersError(f"window width {w} exceeds {self.MAX_WINDOW}")
        self.table = table
        self.width = w
        self.name = name or f"f{w}"

    @classmethod
    def from_callable(cls, fn: Callable[..., float], width: int, name: str | None = None) -> "LocalFunction":
        """Tabulate ``fn(eta_0, ..., eta_{w-1})``."""
        table = [fn(*[(pattern >> j) & 1 for j in range(width)]) for pattern in range(2 ** width)]
        return cls(table, name=name)

    @classmethod
    def centered_occupation(cls, rho: float) -> "LocalFunction":
        """eta_0 - rho."""
        return cls([-rho, 1.0 - rho], name="occupation")

    def __call__(self, *etas) -> float:
        pattern = sum(int(e) << j for j, e in enumerate(etas))
        return float(self.table[pattern])

    def window_sites(self, n: int, d: int) -> np.ndarray:
        coords = np.zeros((self.width, d), dtype=np.int64)
        coords[:, -1] = np.arange(self.width)
        return site_index(coords, n).astype(np.int64)

    def evaluate(self, config, n: int, d: int) -> float:
        eta = _occupancy(config)
        return self(*eta[self.window_sites(n, d)])

    def __eq__(self, other):
        return isinstance(other, LocalFunction) and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(self.table.tobytes())

    def __repr__(self):
        return f"LocalFunction({self.name!r}, width={self.width})"
