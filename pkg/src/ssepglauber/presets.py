"""Experiment presets, configuration parsing and run directories.

Each preset evaluates a list of criteria. A criterion is either an
``identity`` (exact or machine-precision statement) or ``statistical``
(finite-size, Monte Carlo or fitted-constant statement); the exit code of a
run reports the worst failing kind.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from .errors import BudgetExceededError, ConfigError, UnknownPresetError
from .model import LocalFunction, ModelParams

__all__ = [
    "PRESETS",
    "RunManifest",
    "Criterion",
    "parse_config",
    "parse_value",
    "run_preset",
    "load_manifest",
    "exit_code_for",
    "evaluate_clt1d",
    "evaluate_additive",
    "EXIT_OK",
    "EXIT_STATISTICAL",
    "EXIT_IDENTITY",
    "EXIT_CONFIG",
]

EXIT_OK, EXIT_STATISTICAL, EXIT_IDENTITY, EXIT_CONFIG = 0, 2, 3, 4


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.1.0"


@dataclass
class Criterion:
    name: str
    kind: str
    statistic: object
    bound: object
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass
class RunManifest:
    preset: str
    parameters: dict
    master_seed: int
    replicas: int
    tool_version: str
    wall_clock_seconds: float
    event_count: int
    criteria: list
    exit_code: int
    run_dir: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK


# -- configuration -----------------------------------------------------------------

def parse_value(text: str):
    """int, float, bool, comma-separated list of those, or the raw string."""
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


# -- preset pipelines ----------------------------------------------------------------

class _Context:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.used = set()
        self.rows = []
        self.plots = {}
        self.events = 0

    def get(self, key, default):
        self.used.add(key)
        value = self.cfg.get(key, default)
        return value

    def params(self, **defaults) -> ModelParams:
        kw = {k: self.get(k, v) for k, v in defaults.items()}
        lam = self.get("lambda", kw.pop("lam", 0.0))
        return ModelParams(int(kw["n"]), int(kw["d"]), float(kw["a"]), float(kw["b"]), float(lam))

    def row(self, **kw):
        self.rows.append(kw)

    def plot(self, name, header, rows):
        self.plots[name] = (header, rows)


def _within(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def _check_budget(ctx: _Context, params: ModelParams, T: float, replicas: int):
    budget = float(ctx.get("event_budget", 2e10))
    expected = (params.n ** 2 * params.n_bonds + params.max_flip_rate * params.n_sites) * T * replicas
    if expected > budget:
        raise BudgetExceededError(f"expected {expected:.3g} events exceeds event_budget={budget:.3g}")
    return expected


def _preset_exact_suite(ctx: _Context):
    from . import exact
    from .model import drift_decomposition

    n = int(ctx.get("n", 8))
    a, b = float(ctx.get("a", 1.0)), float(ctx.get("b", 1.0))
    lams = _as_list(ctx.get("lambda", [0.1, -0.2, 0.0]))
    rng = np.random.default_rng(int(ctx.get("seed", 0)))
    crit = []
    adj = rows = db = cdc = dec = 0.0
    for lam in lams:
        p = ModelParams(n, 1, a, b, float(lam))
        gen = exact.build_generator(p)
        adj = max(adj, float(np.max(np.abs(exact.adjoint_one(gen) - exact.adjoint_one_formula(gen)))))
        rows = max(rows, gen.row_sum_error())
        db = max(db, exact.detailed_balance_error(gen, 0.3), exact.detailed_balance_error(gen, p.rho_star))
        for _ in range(5):
            cdc = max(cdc, exact.carre_du_champ_identity(gen, rng.random(gen.dimension)))
        dec = max(dec, exact.decomposition_error(gen))
        ctx.row(check="identities", n=n, lam=lam, adjoint=adj, row_sum=rows, detailed_balance=db,
                carre_du_champ=cdc, decomposition=dec)
    # the expansion on random configurations of a larger torus as well
    for _ in range(200):
        p = ModelParams(int(rng.integers(3, 40)), 1, a, b, float(rng.choice(lams)))
        eta = rng.integers(0, 2, p.n_sites)
        direct, expanded = drift_decomposition(eta, p)
        dec = max(dec, float(np.max(np.abs(direct - expanded))))
    crit += [
        Criterion("adjoint_identity", "identity", adj, 1e-12, adj <= 1e-12),
        Criterion("generator_row_sums", "identity", rows, 1e-12, rows <= 1e-12),
        Criterion("exclusion_detailed_balance", "identity", db, 1e-14, db <= 1e-14),
        Criterion("carre_du_champ_identity", "identity", cdc, 1e-12, cdc <= 1e-12),
        Criterion("rate_decomposition_identity", "identity", dec, 1e-12, dec <= 1e-12),
    ]
    # replacement inequality
    rn = int(ctx.get("replacement_n", 8))
    ell = int(ctx.get("ell", 3))
    samples = int(ctx.get("samples", 1000))
    p = ModelParams(rn, 1, a, b, float(ctx.get("replacement_lambda", 0.1)))
    gen = exact.build_generator(p)
    g = np.zeros(rn)
    g[0] = 1.0
    worst = math.inf
    for gamma in _as_list(ctx.get("gamma", [0.1, 1.0, 10.0])):
        res = exact.replacement_inequality_check(gen, g, ell, float(gamma), samples, rng)
        worst = min(worst, res["worst_margin"])
        ctx.row(check="replacement", n=rn, ell=ell, gamma=gamma, worst_margin=res["worst_margin"])
    crit.append(Criterion("replacement_inequality", "identity", worst, -1e-10, worst >= -1e-10,
                          {"n": rn, "ell": ell, "samples": samples}))
    return crit


def _preset_greens(ctx: _Context):
    from .greens import (green_function, infinite_lattice_green_origin, rw_limit_quantities,
                         subgaussian_logmgf_check, subgaussian_weight_families)

    d = int(ctx.get("d", 2))
    ns = [int(v) for v in _as_list(ctx.get("n", [128, 256, 512]))]
    target = 1.0 / (2.0 * math.pi)
    lim = [rw_limit_quantities(n, d) for n in ns]
    resid = max(green_function(n, d).residual() for n in ns)
    plot_rows = []
    for q in lim:
        ctx.row(check="rw_limit", n=q.n, d=d, grad_energy_scaled=q.grad_energy_scaled,
                grad_energy_scaled_ordered=q.grad_energy_scaled_ordered, gn0_scaled=q.gn0_scaled,
                sq_norm=q.sq_norm)
        plot_rows.append([q.n, q.grad_energy_scaled, q.grad_energy_scaled_ordered, q.gn0_scaled])
    ctx.plot("rw_limit", ["n", "grad_energy_scaled", "grad_energy_scaled_ordered", "gn0_scaled"], plot_rows)
    crit = [Criterion("green_residual", "identity", resid, 1e-10, resid <= 1e-10)]
    if d == 2:
        last = lim[-1]
        ge, g0 = last.grad_energy_scaled, last.gn0_scaled
        dist_ge = [abs(q.grad_energy_scaled - target) for q in lim]
        dist_g0 = [abs(q.gn0_scaled - target) for q in lim]
        mono = all(x > y for x, y in zip(dist_ge, dist_ge[1:])) and all(x > y for x, y in zip(dist_g0, dist_g0[1:]))
        agree = abs(ge - g0) / max(abs(ge), abs(g0))
        crit += [
            Criterion("grad_energy_near_limit", "statistical", ge, [target, 0.10], _within(ge, target, 0.10)),
            Criterion("green_origin_near_limit", "statistical", g0, [target, 0.10], _within(g0, target, 0.10)),
            Criterion("limit_quantities_agree", "statistical", agree, 0.02, agree <= 0.02),
            Criterion("monotone_approach", "statistical", [dist_ge, dist_g0], "decreasing", mono),
        ]
    if d == 3:
        ref = infinite_lattice_green_origin(3)
        g0 = lim[-1].gn0_scaled
        crit.append(Criterion("d3_green_origin", "statistical", g0, [ref, 0.15], _within(g0, ref, 0.15)))
    # sub-Gaussian scan
    r_max = float(ctx.get("r_max", 50.0))
    r = np.linspace(-r_max, r_max, int(ctx.get("r_points", 2001)))
    worst = -math.inf
    violations = 0
    for name, w in subgaussian_weight_families().items():
        for rho in _as_list(ctx.get("rho", [0.1, 0.3, 0.5, 0.7, 0.9])):
            v = subgaussian_logmgf_check(w, float(rho), r)
            worst = max(worst, v)
            violations += int(v > 0)
            ctx.row(check="subgaussian", family=name, rho=rho, max_excess=v)
    crit.append(Criterion("subgaussian_no_violation", "identity", violations, 0, violations == 0,
                          {"max_excess": worst}))
    return crit


def _preset_flows(ctx: _Context):
    from .exact import fitted_constant
    from .greens import build_flow

    ells = [int(v) for v in _as_list(ctx.get("ell", [4, 8, 16, 32, 64, 128]))]
    dims = [int(v) for v in _as_list(ctx.get("d", [1, 2, 3]))]
    crit = []
    worst_res = 0.0
    plot_rows = []
    for d in dims:
        ratios, ratios_ord = [], []
        for ell in ells:
            flow = build_flow(ell, d)
            gd = {1: ell, 2: math.log(ell), 3: 1.0}[d]
            res = flow.residual()
            worst_res = max(worst_res, res)
            ratios.append(flow.energy / gd)
            ratios_ord.append(flow.energy_ordered / gd)
            ctx.row(check="flow", d=d, ell=ell, energy=flow.energy, energy_ordered=flow.energy_ordered,
                    ratio=ratios[-1], residual=res)
            plot_rows.append([d, ell, flow.energy, flow.energy_ordered, ratios[-1]])
        fit = fitted_constant(ells, ratios)
        crit.append(Criterion(f"flow_energy_bounded_d{d}", "statistical", fit["constant"], "bounded",
                              fit["bounded"], {"slope": fit["slope"], "constant_ordered": max(ratios_ord)}))
    ctx.plot("flow_energy", ["d", "ell", "energy", "energy_ordered", "ratio"], plot_rows)
    # support holds by construction: the flow is stored on the box only
    crit.append(Criterion("flow_divergence_residual", "identity", worst_res, 1e-10, worst_res <= 1e-10))
    crit.append(Criterion("flow_support_in_box", "identity", 0, 0, True))
    return crit


def _occupation_batch(ctx: _Context, defaults: dict, functions=None):
    from .kmc import simulate_replicas

    p = ctx.params(**{k: defaults[k] for k in ("n", "d", "a", "b")}, lam=defaults["lam"])
    replicas = int(ctx.get("replicas", defaults["replicas"]))
    t_grid = [float(v) for v in _as_list(ctx.get("t_grid", defaults["t_grid"]))]
    T = max(t_grid)
    seed = int(ctx.get("seed", defaults.get("seed", 2024)))
    ctx.events += int(_check_budget(ctx, p, T, replicas))
    batch = simulate_replicas(p, T, replicas, master_seed=seed, t_grid=t_grid, functions=functions,
                              n_jobs=int(ctx.get("jobs", 1)))
    ctx.events_actual = int(batch.event_counts.sum())
    return p, batch, t_grid


def evaluate_clt1d(batch, params: ModelParams, t_grid, rel_tol: float = 0.20, kurt_se: float = 5.0):
    """Criteria comparing replica covariances of the occupation time with alpha."""
    from .limits import CovarianceModel
    from .stats import estimate

    model = CovarianceModel(params, tol=1e-6, horizon=max(t_grid))
    G = batch.functionals["occupation"]
    col = {t: int(np.argmin(np.abs(batch.times - t))) for t in t_grid}
    crit, rows = [], []
    for i, t in enumerate(t_grid):
        for s in t_grid[i:]:
            kind = "variance" if s == t else "covariance"
            est = estimate(G[:, col[t]], "covariance", G[:, col[s]])
            alpha, bound = model.alpha_with_bound(t, s)
            ok = _within(est.estimate, alpha, rel_tol)
            crit.append(Criterion(f"{kind}_t{t}_s{s}", "statistical", est.estimate, [alpha, rel_tol], ok,
                                  {"se": est.se, "alpha_tail_bound": bound}))
            rows.append([t, s, est.estimate, est.se, alpha])
    k = estimate(G[:, col[max(t_grid)]], "kurtosis")
    crit.append(Criterion("kurtosis_gaussian", "statistical", k.estimate, [3.0, kurt_se * k.se],
                          abs(k.estimate - 3.0) <= kurt_se * k.se, {"se": k.se}))
    return crit, rows


def evaluate_additive(batch, params: ModelParams, name: str, f: LocalFunction, t: float = 1.0,
                      rel_tol: float = 0.25):
    from .limits import CovarianceModel, phi_f
    from .stats import estimate

    _, slope = phi_f(f, params.rho_star)
    alpha = CovarianceModel(params, tol=1e-6, horizon=t).alpha(t, t)
    target = slope ** 2 * alpha
    j = int(np.argmin(np.abs(batch.times - t)))
    est = estimate(batch.functionals[name][:, j], "variance")
    return Criterion(f"additive_variance_{name}", "statistical", est.estimate, [target, rel_tol],
                     _within(est.estimate, target, rel_tol), {"se": est.se, "slope": slope, "alpha": alpha})


def _pair_function(rho: float) -> LocalFunction:
    return LocalFunction.from_callable(lambda e0, e1: e0 * e1 - rho ** 2, 2, name="pair")


def _preset_clt1d(ctx: _Context):
    defaults = dict(n=256, d=1, a=1.0, b=1.0, lam=0.0, replicas=400, t_grid=[0.25, 0.5, 1.0])
    p0 = ctx.params(**{k: defaults[k] for k in ("n", "d", "a", "b")}, lam=defaults["lam"])
    pair = _pair_function(p0.rho_star)
    p, batch, t_grid = _occupation_batch(ctx, defaults, functions={"pair": pair})
    crit, rows = evaluate_clt1d(batch, p, t_grid, float(ctx.get("rel_tol", 0.20)))
    ctx.plot("covariance", ["t", "s", "empirical", "se", "alpha"], rows)
    for r in rows:
        ctx.row(check="covariance", t=r[0], s=r[1], empirical=r[2], se=r[3], alpha=r[4])
    ctx.plot("occupation_samples", ["replica", *[f"t{t}" for t in batch.times]],
             [[i, *row] for i, row in enumerate(batch.functionals["occupation"].tolist())])
    return crit


def _preset_additive(ctx: _Context):
    defaults = dict(n=256, d=1, a=1.0, b=1.0, lam=0.0, replicas=400, t_grid=[1.0])
    p0 = ctx.params(**{k: defaults[k] for k in ("n", "d", "a", "b")}, lam=defaults["lam"])
    pair = _pair_function(p0.rho_star)
    p, batch, t_grid = _occupation_batch(ctx, defaults, functions={"pair": pair})
    c = evaluate_additive(batch, p, "pair", pair, max(t_grid), float(ctx.get("rel_tol", 0.25)))
    ctx.row(check="additive", variance=c.statistic, target=c.bound[0])
    return [c]


def _preset_clt2d(ctx: _Context):
    from .limits import bm_variance_2d
    from .stats import estimate

    defaults = dict(n=32, d=2, a=1.0, b=1.0, lam=0.05, replicas=300, t_grid=[0.25, 0.5])
    p, batch, t_grid = _occupation_batch(ctx, defaults)
    G = batch.functionals["occupation"]
    rel = float(ctx.get("rel_tol", 0.25))
    t_hi, t_lo = max(t_grid), min(t_grid)
    j_hi = int(np.argmin(np.abs(batch.times - t_hi)))
    j_lo = int(np.argmin(np.abs(batch.times - t_lo)))
    v_hi = estimate(G[:, j_hi], "variance")
    v_lo = estimate(G[:, j_lo], "variance")
    target = bm_variance_2d(1.0, p)[0]
    ratio = v_hi.estimate / v_lo.estimate
    ctx.row(check="clt2d", t=t_hi, variance=v_hi.estimate, se=v_hi.se, target_per_time=target)
    ctx.row(check="clt2d", t=t_lo, variance=v_lo.estimate, se=v_lo.se, target_per_time=target)
    expected_ratio = t_hi / t_lo
    return [
        Criterion("variance_per_time", "statistical", v_hi.estimate / t_hi, [target, rel],
                  _within(v_hi.estimate / t_hi, target, rel), {"se": v_hi.se / t_hi}),
        Criterion("brownian_linearity", "statistical", ratio, [expected_ratio, rel],
                  _within(ratio, expected_ratio, rel)),
    ]


def _preset_mdp(ctx: _Context):
    from .limits import CovarianceModel
    from .mdp import RateProblem, contraction_check, rate_I

    p = ctx.params(n=256, d=1, a=1.0, b=1.0, lam=0.0)
    eps = float(ctx.get("epsilon", 0.05))
    K_s = int(ctx.get("K_s", 64))
    M = int(ctx.get("M", 256))
    times = [float(v) for v in _as_list(ctx.get("times", [1.0]))]
    gamma = [float(v) for v in _as_list(ctx.get("gamma", [1.0] * len(times)))]
    base = contraction_check(p, times, gamma, eps, K_s, M)
    doubled = contraction_check(p, times, gamma, eps, 2 * K_s, M)
    ratio = doubled.gap / base.gap if base.gap != 0 else float("nan")
    for r in (base, doubled):
        ctx.row(check="contraction", **{k: v for k, v in r.to_dict().items() if k not in ("times", "gamma")})
    close = abs(base.variational_value - base.quadratic_value)
    crit = [
        Criterion("variational_matches_quadratic", "statistical", close, 1e-3 * base.quadratic_value,
                  close <= 1e-3 * base.quadratic_value),
        Criterion("gap_halves_when_modes_double", "statistical", ratio, [0.5, 0.30],
                  _within(ratio, 0.5, 0.30), {"gap": base.gap, "gap_doubled": doubled.gap}),
    ]
    # quadratic-form properties
    model = CovarianceModel(p, epsilon=eps)
    rng = np.random.default_rng(int(ctx.get("seed", 0)))
    psd_min = math.inf
    for k in range(1, 7):
        ts = np.sort(rng.uniform(0.05, 1.0, k))
        psd_min = min(psd_min, float(np.min(np.linalg.eigvalsh(model.alpha_matrix(ts)))))
    prob = RateProblem(times, gamma, sigma=model.alpha_matrix(times))
    c = 2.5
    homog = abs(rate_I(RateProblem(times, c * np.array(gamma), sigma=prob.sigma)) - c * c * rate_I(prob))
    t2 = sorted(set(times + [0.5 * min(times)]))
    g2 = [gamma[times.index(t)] if t in times else 0.3 for t in t2]
    mono = rate_I(RateProblem(t2, g2, sigma=model.alpha_matrix(t2))) >= rate_I(prob) - 1e-12
    crit += [
        Criterion("kernel_psd", "identity", psd_min, 0.0, psd_min >= -1e-12),
        Criterion("rate_homogeneity", "identity", homog, 1e-10 * max(1.0, rate_I(prob)), homog <= 1e-10 * max(1.0, rate_I(prob))),
        Criterion("rate_marginal_monotone", "identity", int(mono), 1, bool(mono)),
    ]
    return crit


def _preset_correlation(ctx: _Context):
    from .exact import fitted_constant, sup_correlation

    ns = [int(v) for v in _as_list(ctx.get("n", list(range(4, 11))))]
    lam = float(ctx.get("lambda", 0.1))
    a, b = float(ctx.get("a", 1.0)), float(ctx.get("b", 1.0))
    vals = []
    for n in ns:
        v = n * sup_correlation(ModelParams(n, 1, a, b, lam))
        vals.append(v)
        ctx.row(check="correlation", n=n, normalized_sup=v)
    fit = fitted_constant(ns, vals)
    zero = max(sup_correlation(ModelParams(n, 1, a, b, 0.0)) for n in ns)
    ctx.plot("correlation", ["n", "n_sup_cov"], [[n, v] for n, v in zip(ns, vals)])
    return [
        Criterion("correlation_bounded", "statistical", fit["constant"], "bounded", fit["bounded"],
                  {"slope": fit["slope"], "values": vals}),
        Criterion("correlation_zero_without_interaction", "identity", zero, 1e-12, zero <= 1e-12),
    ]


def _preset_entropy(ctx: _Context):
    from .exact import fitted_constant, sup_entropy

    ns = [int(v) for v in _as_list(ctx.get("n", list(range(4, 13))))]
    lam = float(ctx.get("lambda", 0.1))
    a, b = float(ctx.get("a", 1.0)), float(ctx.get("b", 1.0))
    vals = []
    for n in ns:
        v = sup_entropy(ModelParams(n, 1, a, b, lam))
        vals.append(v)
        ctx.row(check="entropy", n=n, sup_entropy=v)
    fit = fitted_constant(ns, vals)
    ctx.plot("entropy", ["n", "sup_entropy"], [[n, v] for n, v in zip(ns, vals)])
    return [Criterion("entropy_bounded", "statistical", fit["constant"], "bounded", fit["bounded"],
                      {"slope": fit["slope"], "values": vals})]


PRESETS = {
    "exact-suite": _preset_exact_suite,
    "greens": _preset_greens,
    "flows": _preset_flows,
    "clt1d": _preset_clt1d,
    "clt2d": _preset_clt2d,
    "mdp-consistency": _preset_mdp,
    "correlation": _preset_correlation,
    "entropy": _preset_entropy,
    "additive": _preset_additive,
}

_SIMULATION_PRESETS = {"clt1d", "clt2d", "additive"}


def exit_code_for(criteria) -> int:
    failed = [c for c in criteria if not (c["pass"] if isinstance(c, dict) else c.passed)]
    kinds = {(c["kind"] if isinstance(c, dict) else c.kind) for c in failed}
    if "identity" in kinds:
        return EXIT_IDENTITY
    if kinds:
        return EXIT_STATISTICAL
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_preset(name: str, overrides: dict | None = None, out_root: str | None = "runs") -> RunManifest:
    """Execute a preset; writes ``<out_root>/<name>-<timestamp>-s<seed>/`` unless ``out_root`` is None."""
    if name not in PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = dict(overrides or {})
    ctx = _Context(cfg)
    start = time.perf_counter()
    criteria = PRESETS[name](ctx)
    wall = time.perf_counter() - start
    seed = int(cfg.get("seed", 2024 if name in _SIMULATION_PRESETS else 0))
    crit_dicts = [c.as_dict() for c in criteria]
    manifest = RunManifest(
        preset=name,
        parameters=cfg,
        master_seed=seed,
        replicas=int(cfg.get("replicas", {"clt1d": 400, "additive": 400, "clt2d": 300}.get(name, 0))),
        tool_version=_version(),
        wall_clock_seconds=wall,
        event_count=int(getattr(ctx, "events_actual", 0)),
        criteria=crit_dicts,
        exit_code=exit_code_for(crit_dicts),
    )
    if out_root is not None:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
        run_dir = os.path.join(out_root, f"{name}-{stamp}-s{seed}")
        os.makedirs(os.path.join(run_dir, "plotdata"), exist_ok=True)
        manifest.run_dir = run_dir
        with open(os.path.join(run_dir, "manifest.json"), "w") as fh:
            json.dump(manifest.as_dict(), fh, indent=2, default=_json_default)
        keys = []
        for r in ctx.rows:
            keys += [k for k in r if k not in keys]
        _write_csv(os.path.join(run_dir, "results.csv"), keys, [[r.get(k, "") for k in keys] for r in ctx.rows])
        for plot, (header, rows) in ctx.plots.items():
            _write_csv(os.path.join(run_dir, "plotdata", f"{plot}.csv"), header, rows)
    return manifest


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_manifest(run_dir: str) -> dict:
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        return json.load(fh)
