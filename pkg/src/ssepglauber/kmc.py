"""Event-driven simulation of the exclusion process with Glauber flips.

Two homogeneous Poisson clocks drive the dynamics: every unordered bond rings
at rate n^2 and exchanges its endpoints, and every site rings at the uniform
bound a + max(lam, 0) + b and flips with probability c_x / bound (thinning).
Path functionals are piecewise constant between state changes, so their time
integrals are accumulated exactly.

Reproducibility rests on the counter-based Philox generator seeded from
``(master_seed, replica_index)``. Recording times never consume random
numbers, so the path on [0, t] does not depend on the horizon or on the
sampling grid; functionals at unrecorded times are obtained by replay.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import (
    DegreeOneViolationError,
    DimensionMismatchError,
    HorizonOverflowError,
    InvalidParametersError,
    MissingGreenTableError,
    OutOfHorizonError,
)
from .model import LocalFunction, ModelParams, bond_table, neighbor_table

__all__ = [
    "make_rng",
    "Trajectory",
    "MartingaleTrack",
    "simulate",
    "occupation_time",
    "field_pairing",
    "additive_functional",
    "martingale_track",
    "exclusion_drift_of_green",
    "ReplicaBatch",
    "simulate_replicas",
    "SiteRecorder",
    "write_trajectory_csv",
]

DEFAULT_EVENT_BUDGET = 2_000_000_000
_LOG_CAPACITY = 65_536

# fstate slots
_T, _TLAST, _DRIFT, _QV, _G, _SR, _SEX, _SC = range(8)
# istate slots
_SWAPS, _SWAPS_EFF, _FLIPS, _FLIPS_ACC, _NEXTREC, _COUNT, _NLOG, _DEBUG, _TRACK = range(9)


def make_rng(seed, replica: int | None = None) -> np.random.Generator:
    """Philox generator for ``seed`` or for the pair ``(seed, replica)``."""
    entropy = [int(seed)] if replica is None else [int(seed), int(replica)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@numba.njit(cache=True)
def _rate(eta, nbr, x, a, b, lam_over_2d):
    if eta[x] == 1:
        return b
    occ = 0
    for j in range(nbr.shape[1]):
        occ += eta[nbr[x, j]]
    return a + lam_over_2d * occ


@numba.njit(cache=True)
def _mart_local(eta, nbr, g, x, a, b, lam_over_2d, out):
    """Contributions of the sites x and its neighbours to (S_r, S_c), and of x's bonds to S_ex."""
    sr = 0.0
    sc = 0.0
    z = x
    for j in range(-1, nbr.shape[1]):
        if j >= 0:
            z = nbr[x, j]
        c = _rate(eta, nbr, z, a, b, lam_over_2d)
        sr += g[z] * c * (1 - 2 * eta[z])
        sc += c * g[z] * g[z]
    sex = 0.0
    for j in range(nbr.shape[1]):
        y = nbr[x, j]
        if eta[x] != eta[y]:
            dg = g[x] - g[y]
            sex += dg * dg
    out[0] = sr
    out[1] = sc
    out[2] = sex


@numba.njit(cache=True)
def _set_site(eta, x, value, nbr, g, fstate, a, b, lam_over_2d, rho, track, scratch):
    sr0 = 0.0
    sc0 = 0.0
    sex0 = 0.0
    if track:
        _mart_local(eta, nbr, g, x, a, b, lam_over_2d, scratch)
        sr0, sc0, sex0 = scratch[0], scratch[1], scratch[2]
    eta[x] = value
    if track:
        _mart_local(eta, nbr, g, x, a, b, lam_over_2d, scratch)
        fstate[_SR] += scratch[0] - sr0
        fstate[_SC] += scratch[1] - sc0
        fstate[_SEX] += scratch[2] - sex0
        fstate[_G] += g[x] * (2 * value - 1)


@numba.njit(cache=True)
def _watch_values(eta, wsites, wwidth, wtable, out):
    for k in range(wsites.shape[0]):
        pattern = 0
        for j in range(wwidth[k]):
            pattern |= eta[wsites[k, j]] << j
        out[k] = wtable[k, pattern]


@numba.njit(cache=True)
def _integrate_to(t, eta, fstate, wvals, wint, beta, n2, rho, track):
    # watcher values only change at watched sites, so untracked runs call this lazily
    dt = t - fstate[_TLAST]
    if dt > 0:
        for k in range(wvals.shape[0]):
            wint[k] += wvals[k] * dt
        if track:
            drift = fstate[_G] - (eta[0] - rho) + fstate[_SR]
            qv = beta * beta * (n2 * fstate[_SEX] + fstate[_SC])
            fstate[_DRIFT] += drift * dt
            fstate[_QV] += qv * dt
    fstate[_TLAST] = t


@numba.njit(cache=True)
def _record(r, eta, fstate, istate, wint, beta, rec_w, rec_mart, rec_count, snaps, take_snap):
    for k in range(wint.shape[0]):
        rec_w[k, r] = beta * wint[k]
    rec_mart[0, r] = fstate[_G]
    rec_mart[1, r] = fstate[_DRIFT]
    rec_mart[2, r] = fstate[_QV]
    rec_count[r] = istate[_COUNT]
    if take_snap:
        for x in range(eta.shape[0]):
            snaps[r, x] = eta[x]


@numba.njit(cache=True)
def _run(rng, eta, nbr, bonds, g, fpar, t_end, rec_times, fstate, istate,
         wsites, wwidth, wtable, watched, wvals, wint,
         rec_w, rec_mart, rec_count, snaps, take_snap, log_t, log_kind, log_x, log_y, log_on):
    """Advance until ``t_end`` or until the event log fills (return 1). Returns 0 when done."""
    n2, a, b, lam_over_2d, cmax, beta, rho = fpar[0], fpar[1], fpar[2], fpar[3], fpar[4], fpar[5], fpar[6]
    n_bonds = bonds.shape[0]
    bond_rate = n2 * n_bonds
    total = bond_rate + cmax * eta.shape[0]
    track = istate[_TRACK] == 1
    scratch = np.empty(3)
    n_rec = rec_times.shape[0]
    while True:
        t_next = fstate[_T] + rng.standard_exponential() / total
        while istate[_NEXTREC] < n_rec and rec_times[istate[_NEXTREC]] <= min(t_next, t_end):
            r = istate[_NEXTREC]
            _integrate_to(rec_times[r], eta, fstate, wvals, wint, beta, n2, rho, track)
            _record(r, eta, fstate, istate, wint, beta, rec_w, rec_mart, rec_count, snaps, take_snap)
            istate[_NEXTREC] += 1
        if t_next > t_end:
            fstate[_T] = t_end
            return 0
        fstate[_T] = t_next
        u = rng.random() * total
        changed_x = -1
        changed_y = -1
        kind = 0
        if u < bond_rate:
            k = int(u / n2)
            if k >= n_bonds:
                k = n_bonds - 1
            istate[_SWAPS] += 1
            x = bonds[k, 0]
            y = bonds[k, 1]
            if eta[x] != eta[y]:
                istate[_SWAPS_EFF] += 1
                vx = eta[x]
                if track:
                    _integrate_to(t_next, eta, fstate, wvals, wint, beta, n2, rho, track)
                    _set_site(eta, x, eta[y], nbr, g, fstate, a, b, lam_over_2d, rho, track, scratch)
                    _set_site(eta, y, vx, nbr, g, fstate, a, b, lam_over_2d, rho, track, scratch)
                else:
                    if watched[x] or watched[y]:
                        _integrate_to(t_next, eta, fstate, wvals, wint, beta, n2, rho, track)
                    eta[x] = eta[y]
                    eta[y] = vx
                changed_x = x
                changed_y = y
        else:
            v = (u - bond_rate) / cmax
            x = int(v)
            if x >= eta.shape[0]:
                x = eta.shape[0] - 1
            frac = v - x
            istate[_FLIPS] += 1
            if frac * cmax < _rate(eta, nbr, x, a, b, lam_over_2d):
                istate[_FLIPS_ACC] += 1
                if track or watched[x]:
                    _integrate_to(t_next, eta, fstate, wvals, wint, beta, n2, rho, track)
                istate[_COUNT] += 1 - 2 * eta[x]
                if track:
                    _set_site(eta, x, 1 - eta[x], nbr, g, fstate, a, b, lam_over_2d, rho, track, scratch)
                else:
                    eta[x] = 1 - eta[x]
                changed_x = x
                kind = 1
        if changed_x >= 0:
            if watched[changed_x] or (changed_y >= 0 and watched[changed_y]):
                _watch_values(eta, wsites, wwidth, wtable, wvals)
            if istate[_DEBUG] == 1:
                total_particles = 0
                for z in range(eta.shape[0]):
                    total_particles += eta[z]
                if total_particles != istate[_COUNT]:
                    raise RuntimeError("particle count drifted")
            if log_on:
                i = istate[_NLOG]
                log_t[i] = t_next
                log_kind[i] = kind
                log_x[i] = changed_x
                log_y[i] = changed_y
                istate[_NLOG] = i + 1
                if i + 1 >= log_t.shape[0]:
                    return 1


@dataclass
class MartingaleTrack:
    """Dynkin martingale of the Green-function observable and its bracket on the sample grid."""

    times: np.ndarray
    M_values: np.ndarray
    QV_values: np.ndarray
    green: object = field(repr=False, default=None)


@dataclass
class Trajectory:
    """One simulated path, summarized on a grid of sampling times.

    ``functionals`` maps names to recorded integrals beta int_0^t (f - phi_f(rho*)) ds;
    the name ``"occupation"`` is always present.
    """

    seed: object
    params: ModelParams
    T: float
    event_count: int
    times: np.ndarray
    functionals: dict
    particle_counts: np.ndarray
    counters: dict
    martingale_raw: np.ndarray | None = None
    snapshots: np.ndarray | None = None
    initial: np.ndarray | None = field(default=None, repr=False)
    local_functions: dict = field(default_factory=dict, repr=False)
    budget: int = DEFAULT_EVENT_BUDGET

    def index_of(self, t: float) -> int | None:
        hits = np.nonzero(np.abs(self.times - t) <= 1e-15 * max(1.0, t))[0]
        return int(hits[0]) if hits.size else None

    @property
    def gamma(self) -> np.ndarray:
        return self.functionals["occupation"]


def _prepare_watchers(params: ModelParams, functions: dict):
    names = ["occupation"] + [k for k in functions if k != "occupation"]
    funcs = {"occupation": LocalFunction.centered_occupation(params.rho_star)}
    funcs.update({k: v for k, v in functions.items() if k != "occupation"})
    K = len(names)
    wsites = np.zeros((K, 3), dtype=np.int64)
    wwidth = np.zeros(K, dtype=np.int64)
    wtable = np.zeros((K, 8))
    watched = np.zeros(params.n_sites, dtype=np.bool_)
    for k, name in enumerate(names):
        f = funcs[name]
        sites = f.window_sites(params.n, params.d)
        wsites[k, : sites.size] = sites
        wwidth[k] = f.width
        wtable[k, : f.table.size] = f.table
        watched[sites] = True
    return names, funcs, wsites, wwidth, wtable, watched


def _check_degree_one(f: LocalFunction, rho: float):
    from .limits import phi_f

    value, slope = phi_f(f, rho)
    if abs(value) > 1e-10:
        raise DegreeOneViolationError(f"{f.name}: E f = {value:.3g} != 0 at rho*")
    return value, slope


def simulate(params: ModelParams, T: float, seed=0, observers: Sequence[Callable] = (),
             t_grid=None, functions: dict | None = None, green=None, snapshots: bool = False,
             rng: np.random.Generator | None = None, budget: int = DEFAULT_EVENT_BUDGET,
             debug: bool = False, initial=None) -> Trajectory:
    """Exact sample path on [0, T] started from Bernoulli(rho*) product measure.

    Parameters
    ----------
    seed : int or (int, int)
        Master seed, or ``(master_seed, replica_index)``.
    observers : callables ``obs(t, kind, x, y)``
        Called for every state change; ``kind`` is 0 for an exchange of x and y,
        1 for a flip at x (then ``y = -1``). An observer with a ``bind`` method
        receives the initial configuration before the run.
    t_grid : sequence of float
        Extra sampling times; 0 and T are always included.
    functions : dict of name -> LocalFunction
        Degree-one local functions whose additive functionals are recorded.
    green : GreenTable, optional
        Enables the martingale track.
    """
    if not T > 0:
        raise InvalidParametersError("horizon must be positive")
    bonds = bond_table(params.n, params.d)
    total_rate = params.n ** 2 * bonds.shape[0] + params.max_flip_rate * params.n_sites
    if total_rate * T > budget:
        raise HorizonOverflowError(
            f"expected {total_rate * T:.3g} events exceeds the budget {budget:.3g}"
        )
    functions = dict(functions or {})
    for f in functions.values():
        _check_degree_one(f, params.rho_star)
    if rng is None:
        rng = make_rng(*seed) if isinstance(seed, tuple) else make_rng(seed)
    grid = np.unique(np.concatenate([[0.0, float(T)], np.asarray(t_grid if t_grid is not None else [], float)]))
    if grid[-1] > T or grid[0] < 0:
        raise OutOfHorizonError("sampling times must lie in [0, T]")
    N = params.n_sites
    if initial is None:
        eta = (rng.random(N) < params.rho_star).astype(np.int8)
    else:
        eta = np.asarray(initial, dtype=np.int8).copy()
    eta0 = eta.copy()
    for obs in observers:
        if hasattr(obs, "bind"):
            obs.bind(eta0)
    nbr = neighbor_table(params.n, params.d)
    names, funcs, wsites, wwidth, wtable, watched = _prepare_watchers(params, functions)
    K = len(names)
    track = green is not None
    if track:
        if green.n != params.n or green.d != params.d:
            raise MissingGreenTableError("Green table does not match (n, d)")
        g = np.ascontiguousarray(green.flat(), dtype=float)
    else:
        g = np.zeros(N)
    fpar = np.array([params.n ** 2, params.a, params.b, params.lam / (2 * params.d),
                     params.max_flip_rate, params.beta_dn, params.rho_star])
    fstate = np.zeros(8)
    istate = np.zeros(9, dtype=np.int64)
    istate[_COUNT] = int(eta.sum())
    istate[_DEBUG] = int(debug)
    istate[_TRACK] = int(track)
    if track:
        bar = eta - params.rho_star
        c = np.array([(params.a + params.lam / (2 * params.d) * eta[nbr[x]].sum()) * (1 - eta[x]) + params.b * eta[x]
                      for x in range(N)])
        fstate[_G] = float(g @ bar)
        fstate[_SR] = float(np.sum(g * c * (1 - 2 * eta)))
        fstate[_SC] = float(np.sum(c * g * g))
        fstate[_SEX] = float(sum(((g[x] - g[y]) ** 2) for x, y in bonds if eta[x] != eta[y]))
    wvals = np.zeros(K)
    _watch_values(eta, wsites, wwidth, wtable, wvals)
    wint = np.zeros(K)
    n_rec = grid.size
    rec_w = np.zeros((K, n_rec))
    rec_mart = np.zeros((3, n_rec))
    rec_count = np.zeros(n_rec, dtype=np.int64)
    snaps = np.zeros((n_rec, N) if snapshots else (1, 1), dtype=np.int8)
    log_on = bool(observers)
    cap = _LOG_CAPACITY if log_on else 1
    log_t = np.zeros(cap)
    log_kind = np.zeros(cap, dtype=np.int64)
    log_x = np.zeros(cap, dtype=np.int64)
    log_y = np.zeros(cap, dtype=np.int64)
    while True:
        status = _run(rng, eta, nbr, bonds, g, fpar, float(T), grid, fstate, istate,
                      wsites, wwidth, wtable, watched, wvals, wint,
                      rec_w, rec_mart, rec_count, snaps, snapshots, log_t, log_kind, log_x, log_y, log_on)
        if log_on:
            for i in range(istate[_NLOG]):
                for obs in observers:
                    obs(float(log_t[i]), int(log_kind[i]), int(log_x[i]), int(log_y[i]))
            istate[_NLOG] = 0
        if status == 0:
            break
    counters = {
        "swap_events": int(istate[_SWAPS]),
        "swap_effective": int(istate[_SWAPS_EFF]),
        "flip_proposals": int(istate[_FLIPS]),
        "flip_accepted": int(istate[_FLIPS_ACC]),
    }
    return Trajectory(
        seed=seed,
        params=params,
        T=float(T),
        event_count=counters["swap_events"] + counters["flip_proposals"],
        times=grid,
        functionals={name: rec_w[k] for k, name in enumerate(names)},
        particle_counts=rec_count,
        counters=counters,
        martingale_raw=rec_mart if track else None,
        snapshots=snaps if snapshots else None,
        initial=eta0,
        local_functions=funcs,
        budget=budget,
    )


def _replay(traj: Trajectory, t: float, **kwargs) -> Trajectory:
    functions = {k: v for k, v in traj.local_functions.items() if k != "occupation"}
    functions.update(kwargs.pop("functions", {}))
    return simulate(traj.params, t, seed=traj.seed, t_grid=[t], functions=functions,
                    budget=traj.budget, **kwargs)


def _check_time(traj: Trajectory, t: float):
    if t < 0 or t > traj.T:
        raise OutOfHorizonError(f"t={t} outside [0, {traj.T}]")


def occupation_time(traj: Trajectory, t: float) -> float:
    """beta int_0^t (eta_0(s) - rho*) ds, exact."""
    return additive_functional(traj, "occupation", t)


def additive_functional(traj: Trajectory, f, t: float) -> float:
    """beta int_0^t f(eta(s)) ds for a degree-one local function (or a recorded name)."""
    _check_time(traj, t)
    if t == 0:
        if isinstance(f, LocalFunction):
            _check_degree_one(f, traj.params.rho_star)
        return 0.0
    if isinstance(f, LocalFunction):
        _check_degree_one(f, traj.params.rho_star)
        name = next((k for k, v in traj.local_functions.items() if v == f), None)
        if name is None:
            name = f.name
            return _replay(traj, t, functions={name: f}).functionals[name][-1]
    else:
        name = f
    i = traj.index_of(t)
    if i is not None:
        return float(traj.functionals[name][i])
    return float(_replay(traj, t).functionals[name][-1])


def field_pairing(traj: Trajectory, H: Callable, t: float) -> float:
    """n^{-1/2} sum_x (eta_x(t) - rho*) H(x / n), d = 1 only."""
    p = traj.params
    if p.d != 1:
        raise DimensionMismatchError("field pairings are defined for d = 1")
    _check_time(traj, t)
    i = traj.index_of(t)
    if traj.snapshots is not None and i is not None:
        eta = traj.snapshots[i]
    elif t == 0:
        eta = traj.initial
    else:
        eta = _replay(traj, t, snapshots=True).snapshots[-1]
    x = np.arange(p.n) / p.n
    h = np.asarray(np.vectorize(H, otypes=[float])(x), dtype=float)
    return float(np.sum((eta - p.rho_star) * h) / math.sqrt(p.n))


def martingale_track(traj: Trajectory) -> MartingaleTrack:
    """M_n and <M_n> on the sample grid; requires a run with a Green table."""
    if traj.martingale_raw is None:
        raise MissingGreenTableError("trajectory was simulated without a Green table")
    G, drift, qv = traj.martingale_raw
    beta = traj.params.beta_dn
    M = beta * (G - G[0] - drift)
    return MartingaleTrack(traj.times.copy(), M, qv.copy())


def exclusion_drift_of_green(eta, green) -> tuple[float, float]:
    """``(n^2 L_ex G(eta), G(eta) - etabar_0)`` for G = sum_x g(x) etabar_x.

    Both sides are independent of the centring because g sums to one.

    The exclusion drift is the bond sum n^2 sum (g_x - g_y)(eta_y - eta_x).
    """
    n, d = green.n, green.d
    g = green.flat()
    eta = np.asarray(eta, dtype=float)
    bonds = bond_table(n, d)
    x, y = bonds[:, 0], bonds[:, 1]
    lhs = n * n * float(np.sum((g[x] - g[y]) * (eta[y] - eta[x])))
    rhs = float(g @ eta) - eta[0]
    return lhs, rhs


class SiteRecorder:
    """Observer logging the occupation history of one site."""

    def __init__(self, site: int, initial: int | None = None):
        self.site = site
        self.times = [0.0]
        self.values = [] if initial is None else [int(initial)]

    def bind(self, eta0):
        self.times = [0.0]
        self.values = [int(eta0[self.site])]

    def __call__(self, t, kind, x, y):
        if x == self.site or y == self.site:
            self.times.append(t)
            self.values.append(1 - self.values[-1])

    def value_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[i]


# -- replicas -----------------------------------------------------------------------

@dataclass
class ReplicaBatch:
    """Functionals of independent replicas on a common grid, ordered by replica index."""

    params: ModelParams
    master_seed: int
    times: np.ndarray
    functionals: dict
    martingale: np.ndarray | None
    qv: np.ndarray | None
    event_counts: np.ndarray
    initial_at: np.ndarray | None = None
    snapshots: np.ndarray | None = None

    @property
    def n_replicas(self) -> int:
        return self.event_counts.size


def _one_replica(params, T, master_seed, r, t_grid, functions, green, snapshots, budget):
    traj = simulate(params, T, seed=(master_seed, r), t_grid=t_grid, functions=functions,
                    green=green, snapshots=snapshots, budget=budget)
    mt = martingale_track(traj) if green is not None else None
    return r, traj.functionals, mt, traj.event_count, traj.snapshots, traj.times


def simulate_replicas(params: ModelParams, T: float, n_replicas: int, master_seed: int = 0,
                      t_grid=None, functions: dict | None = None, green=None, snapshots: bool = False,
                      n_jobs: int = 1, replica_indices=None, budget: int = DEFAULT_EVENT_BUDGET) -> ReplicaBatch:
    """Run replicas ``(master_seed, r)``; results do not depend on ``n_jobs`` or completion order."""
    indices = list(range(n_replicas)) if replica_indices is None else list(replica_indices)
    args = (params, T, master_seed)
    if n_jobs == 1:
        results = [_one_replica(*args, r, t_grid, functions, green, snapshots, budget) for r in indices]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_one_replica)(*args, r, t_grid, functions, green, snapshots, budget) for r in indices
        )
    results.sort(key=lambda item: item[0])
    times = results[0][5]
    names = list(results[0][1])
    funcs = {k: np.array([res[1][k] for res in results]) for k in names}
    mart = qv = None
    if green is not None:
        mart = np.array([res[2].M_values for res in results])
        qv = np.array([res[2].QV_values for res in results])
    snaps = np.array([res[4] for res in results]) if snapshots else None
    return ReplicaBatch(params, master_seed, times, funcs, mart, qv,
                        np.array([res[3] for res in results]), snapshots=snaps)


def write_trajectory_csv(path, batch_or_traj, extra_fields: dict | None = None):
    """Rows (seed, n, d, t, gamma, M, QV, <functional columns>) per replica and time."""
    if isinstance(batch_or_traj, Trajectory):
        tr = batch_or_traj
        mt = martingale_track(tr) if tr.martingale_raw is not None else None
        rows_src = [(tr.seed, tr.functionals, mt.M_values if mt else None, mt.QV_values if mt else None)]
        params, times = tr.params, tr.times
    else:
        b = batch_or_traj
        params, times = b.params, b.times
        rows_src = []
        for r in range(b.n_replicas):
            rows_src.append(((b.master_seed, r), {k: v[r] for k, v in b.functionals.items()},
                             None if b.martingale is None else b.martingale[r],
                             None if b.qv is None else b.qv[r]))
    extra_names = [k for k in rows_src[0][1] if k != "occupation"]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["seed", "n", "d", "t", "gamma", "M", "QV", *extra_names])
        for seed, funcs, M, QV in rows_src:
            for j, t in enumerate(times):
                out.writerow([seed if not isinstance(seed, tuple) else f"{seed[0]}:{seed[1]}",
                              params.n, params.d, repr(float(t)), repr(float(funcs["occupation"][j])),
                              "" if M is None else repr(float(M[j])), "" if QV is None else repr(float(QV[j])),
                              *[repr(float(funcs[k][j])) for k in extra_names]])
