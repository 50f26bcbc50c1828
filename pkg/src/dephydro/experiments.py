"""Reproducible experiments tying the particle system to the conservation law.

Each experiment kind declares typed defaults (see ``EXPERIMENTS``); a run
takes an ``ExperimentConfig`` and returns a ``Report``. Replicas derive every
stream from (master seed, replica id) and may run in worker processes;
results are reduced in replica order, so ``jobs`` never changes the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from dephydro import claw, coupling, dynamics
from dephydro import observables as obs
from dephydro.clocks import Purpose, RngKey
from dephydro.config import ConfigError, ExperimentConfig, build_config
from dephydro.lattice import Configuration, DensityProfile, Ring, Segment, centered_segment, sample_product
from dephydro.report import (
    EXACT,
    STATISTICAL,
    Report,
    Table,
    check_ge,
    check_le,
    check_true,
    profile_table,
    series_table,
)

DEFAULT_SEED = 20240611
MAX_SITES = 50_000_000  # memory budget for one window

TEST_FUNCTIONS = {
    "hat": obs.Hat(0.0, 1.0),
    "gauss": obs.TruncatedGaussian(0.5, 0.5, 3.0),
    "indicator": obs.SmoothedIndicator(-1.0, 1.0, 0.25),
}
FLUCTUATION_FUNCTIONS = {
    "hat": obs.Hat(0.0, 1.0),
    "gauss": obs.TruncatedGaussian(0.0, 0.5, 3.0),
    "zero": obs.Hat(0.0, 1.0),  # multiplied by 0 when sampled
}


def _map(fn, tasks, jobs: int):
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _se(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else float("nan")


def _replica_id(rep: int, n: int) -> int:
    """Stream index for replica ``rep`` at scale ``n``: independent across scales."""
    return (rep << 20) | n


def _profile(cfg: ExperimentConfig, prefix: str = "profile") -> DensityProfile:
    kind = cfg[f"{prefix}.kind"]
    try:
        if kind == "step":
            return DensityProfile.step(cfg[f"{prefix}.lambda"], cfg[f"{prefix}.rho"])
        if kind == "constant":
            return DensityProfile.constant(cfg[f"{prefix}.rho"])
        if kind == "table":
            return DensityProfile.table(cfg[f"{prefix}.breaks"], cfg[f"{prefix}.values"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"{prefix}.kind must be step, constant or table")


def _functions(names, table=TEST_FUNCTIONS):
    bad = [n for n in names if n not in table]
    if bad:
        raise ConfigError(f"unknown test functions {bad}; choose from {sorted(table)}")
    return [table[n] for n in names]


def _need(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


# ---------------------------------------------------------------- PDE references


class Reference:
    """u(x, t) for a profile: exact for steps and constants, Godunov for tables."""

    def __init__(self, profile: DensityProfile, times, half_width: float, dx: float):
        self.profile = profile
        self.sol = None
        self.grids = {}
        if profile.kind in ("step", "constant"):
            lam, rho = (profile.values * 2)[:2]
            self.sol = claw.riemann_solve(lam, rho)
        else:
            ts = sorted(set(float(t) for t in times))
            run = claw.godunov_evolve(profile, half_width, dx, ts[-1], snapshot_times=ts)
            self.grids = dict(zip(ts, run.snapshots))

    def breaks(self, t: float) -> list:
        if self.sol is not None and t > 0:
            return [v * t for v, _, _ in self.sol.jumps()]
        return []

    def point(self, x, t: float):
        x = np.asarray(x, dtype=float)
        if self.sol is not None:
            return self.profile(x) if t == 0 else self.sol.at(x, t)
        g = self.grids[float(t)]
        k = np.clip(np.floor((x + g.half_width) / g.dx).astype(np.int64), 0, g.u.size - 1)
        return g.u[k]

    def block_averages(self, edges, t: float) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        if self.sol is not None:
            if t == 0:
                return np.array([self.profile.integral(a, b) / (b - a) for a, b in zip(edges[:-1], edges[1:])])
            return np.array([self.sol.cell_average(a, b, t) for a, b in zip(edges[:-1], edges[1:])])
        g = self.grids[float(t)]
        # the cumulative integral of a piecewise constant is piecewise linear
        cum = np.interp(edges, g.edges, np.concatenate([[0.0], np.cumsum(g.u) * g.dx]))
        return np.diff(cum) / np.diff(edges)


def _pairing_reference(ref: Reference, f, eps: float, sites: np.ndarray, t: float) -> float:
    x = eps * sites
    return float(eps * np.dot(f(x), ref.point(x, t)))


# ---------------------------------------------------------------- hydrodynamic limits


def _window_sites(cfg, n: int, reach: float) -> int:
    T, margin = cfg["time.T"], cfg["window.margin"]
    need = reach + 2.0 * T + margin
    half = cfg["window.half_width"] or need
    if half < need - 1e-12:
        raise ConfigError(f"window half-width {half} < {need} (A + 2T + margin): boundary would reach the bulk")
    sites = int(math.ceil(half * n))
    _need(2 * sites + 1 <= MAX_SITES, f"window of {2 * sites + 1} sites exceeds the memory budget")
    return sites


def _hydro_task(task):
    (pkind, pvals, pbreaks), n, master, rid, T, half_sites, mode, macro_edges, fine_edges, fnames = task
    profile = DensityProfile(pkind, pvals, pbreaks)
    topo = centered_segment(half_sites)
    eps = 1.0 / n
    eta0 = sample_product(profile, topo, RngKey(master, Purpose.INIT, replica=rid), scale_eps=eps)
    res = dynamics.evolve(eta0, T * n, RngKey(master, Purpose.CLOCK, replica=rid), mode=mode)
    eta = res.config
    x = eps * topo.sites()
    occ = eta.to_array().astype(float)
    pair = [float(eps * np.dot(TEST_FUNCTIONS[f](x), occ)) for f in fnames]
    return (
        obs.block_means(eta, macro_edges, eps),
        obs.block_means(eta, fine_edges, eps),
        np.array(pair),
        res.n_events,
    )


def _fine_edges(A: float, n: int, block: int) -> np.ndarray:
    w = block / n
    m = max(int(math.floor(2 * A / w + 1e-9)), 1)
    return -A + (2 * A / m) * np.arange(m + 1)


def _macro_edges(A: float, h: float) -> np.ndarray:
    m = int(round(2 * A / h))
    _need(m >= 1 and abs(m * h - 2 * A) < 1e-9, "metric.block_width must divide 2A")
    return -A + h * np.arange(m + 1)


def _hydro_common(cfg: ExperimentConfig, profile: DensityProfile, ref: Reference, jobs: int, report: Report):
    """Shared pipeline of the weak hydrodynamic runs; returns per-n results."""
    A, T = cfg["window.A"], cfg["time.T"]
    fnames = cfg["observables.functions"]
    fns = _functions(fnames)
    macro = _macro_edges(A, cfg["metric.block_width"])
    ref_blocks = ref.block_averages(macro, T)
    h = float(np.diff(macro)[0])
    master, seeds, mode = cfg["run.seed"], cfg["run.seeds"], cfg["run.mode"]
    pspec = (profile.kind, profile.values, profile.breaks)
    out = {}
    for n in cfg["scales.n"]:
        half = _window_sites(cfg, n, A)
        block = cfg["metric.fine_block"] or obs.default_block_size(n)
        fine = _fine_edges(A, n, block)
        tasks = [
            (pspec, n, master, _replica_id(r, n), T, half, mode, macro, fine, tuple(fnames))
            for r in range(seeds)
        ]
        results = _map(_hydro_task, tasks, jobs)
        l1 = np.array([np.sum(np.abs(bm - ref_blocks)) * h for bm, _, _, _ in results])
        sites = np.arange(-half, half + 1)
        pref = np.array([_pairing_reference(ref, f, 1.0 / n, sites, T) for f in fns])
        perr = np.array([np.abs(p - pref) for _, _, p, _ in results])
        fine_mean = np.mean([fm for _, fm, _, _ in results], axis=0)
        fine_ref = ref.block_averages(fine, T)
        centers = 0.5 * (fine[:-1] + fine[1:])
        report.tables[f"profile_n{n}.csv"] = profile_table(centers, fine_mean, fine_ref)
        out[n] = dict(l1=l1, perr=perr, centers=centers, fine_mean=fine_mean, half=half, macro=macro,
                      ref_blocks=ref_blocks, h=h, events=int(sum(r[3] for r in results)))
        report.metrics[f"n{n}"] = {
            "window_sites": 2 * half + 1,
            "events": out[n]["events"],
            "l1_mean": float(l1.mean()),
            "l1_stderr": _se(l1),
            "l1_per_seed": l1.tolist(),
            "pairing_error_mean": dict(zip(fnames, perr.mean(axis=0).tolist())),
            "pairing_error_stderr": dict(zip(fnames, [_se(c) for c in perr.T])),
        }
    return out


def _window_audit(cfg, profile, ref, out, report):
    """Rerun one replica in keyed mode on a 1.5x wider window; the L1 metric must not move."""
    if not cfg["audit.window"]:
        return
    ns = cfg["scales.n"]
    n = cfg["audit.n"] or ns[0]
    A, T = cfg["window.A"], cfg["time.T"]
    half = _window_sites(cfg, n, A)
    macro = _macro_edges(A, cfg["metric.block_width"])
    h = float(np.diff(macro)[0])
    ref_blocks = ref.block_averages(macro, T)
    pspec = (profile.kind, profile.values, profile.breaks)
    l1 = []
    for w in (half, int(math.ceil(1.5 * half))):
        bm, _, _, _ = _hydro_task((pspec, n, cfg["run.seed"], _replica_id(0, n), T, w, "keyed", macro, macro, ()))
        l1.append(float(np.sum(np.abs(bm - ref_blocks)) * h))
    report.metrics["window_audit"] = {"n": n, "l1_narrow": l1[0], "l1_wide": l1[1]}
    report.add(check_le("window sufficiency: |L1(1.5x window) - L1|", abs(l1[1] - l1[0]), cfg["audit.tol"], EXACT, n=n))


HYDRO_COMMON = {
    "run.seed": DEFAULT_SEED,
    "run.seeds": 20,
    "run.mode": "gillespie",
    "scales.n": [200, 800, 3200],
    "time.T": 1.0,
    "window.A": 3.0,
    "window.margin": 0.25,
    "window.half_width": 0.0,
    "metric.block_width": 1.0,
    "metric.fine_block": 0,
    "observables.functions": ["hat", "gauss", "indicator"],
    "audit.window": True,
    "audit.n": 0,
    "audit.tol": 1e-3,
}


def _validate_hydro(cfg):
    _need(cfg["time.T"] > 0 and cfg["window.A"] > 0, "need T > 0 and A > 0")
    _need(cfg["run.seeds"] >= 1, "need at least one seed")
    _need(all(n >= 1 for n in cfg["scales.n"]), "scales must be positive")
    _need(cfg["run.mode"] in ("keyed", "gillespie"), "run.mode must be keyed or gillespie")
    _need(cfg["window.margin"] >= 0, "window.margin must be nonnegative")
    _functions(cfg["observables.functions"])
    _macro_edges(cfg["window.A"], cfg["metric.block_width"])
    for n in cfg["scales.n"]:
        _window_sites(cfg, n, cfg["window.A"])


HYDRO_RIEMANN_DEFAULTS = {
    **HYDRO_COMMON,
    "riemann.lambda": 0.5,
    "riemann.rho": 0.0,
    "check.l1_max": 0.05,
    "check.jump_tol": 0.05,
}


def _validate_hydro_riemann(cfg):
    _validate_hydro(cfg)
    _need(0 <= cfg["riemann.lambda"] <= 1 and 0 <= cfg["riemann.rho"] <= 1, "Riemann data must lie in [0, 1]")


def run_hydro_riemann(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Block-density L1 error against the exact Riemann solution, per scale."""
    lam, rho = cfg["riemann.lambda"], cfg["riemann.rho"]
    profile = DensityProfile.step(lam, rho)
    ref = Reference(profile, [cfg["time.T"]], 0, 0)
    report = Report(cfg.kind, cfg.to_dict(), [cfg["run.seed"]])
    out = _hydro_common(cfg, profile, ref, jobs, report)
    ns = cfg["scales.n"]
    means = [out[n]["l1"].mean() for n in ns]
    seeds = cfg["run.seeds"]
    if len(ns) > 1:
        worst = max(b - a for a, b in zip(means, means[1:]))
        report.add(check_le("mean L1 strictly decreasing in n (max increment)", worst, -1e-15, STATISTICAL, seeds=seeds))
    report.add(check_le(f"mean L1 at n = {ns[-1]}", means[-1], cfg["check.l1_max"], STATISTICAL, seeds=seeds,
                        stderr=_se(out[ns[-1]]["l1"])))
    jumps = ref.sol.jumps()
    T = cfg["time.T"]
    if jumps:
        v, um, up = jumps[-1]
        o = out[ns[-1]]
        near = np.abs(o["centers"] - v * T) <= 0.5
        loc = claw.level_crossing(o["centers"][near], o["fine_mean"][near], 0.5 * (um + up))
        report.metrics["jump"] = {"exact": v * T, "measured": loc, "level": 0.5 * (um + up)}
        report.add(check_le("jump location error", abs(loc - v * T), cfg["check.jump_tol"], STATISTICAL, seeds=seeds, n=ns[-1]))
    _window_audit(cfg, profile, ref, out, report)
    return report


HYDRO_CAUCHY_DEFAULTS = {
    **HYDRO_COMMON,
    "profile.kind": "table",
    "profile.lambda": 0.5,
    "profile.rho": 0.2,
    "profile.breaks": [-2.0, -1.0, 0.0, 1.0],
    "profile.values": [0.2, 0.8, 0.2],
    "ref.dx": 0.0,
    "check.l1_max": 0.07,
    "check.paired_fraction": 0.8,
}


def _ref_grid(cfg, reach: float):
    """Godunov reference domain and mesh: dx <= 1/(4 max n), aligned with metric blocks."""
    T = cfg["time.T"]
    dx = cfg["ref.dx"] or 1.0 / (4 * max(cfg["scales.n"]))
    _need(dx <= 1.0 / (4 * max(cfg["scales.n"])) + 1e-15, "ref.dx must be at most 1/(4 n)")
    half = math.ceil(reach + 2 * T + 1.0)
    return float(half), dx


def _validate_hydro_cauchy(cfg):
    _validate_hydro(cfg)
    _profile(cfg)


def run_hydro_cauchy(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Same pipeline as the Riemann run against a Godunov reference."""
    profile = _profile(cfg)
    T = cfg["time.T"]
    half, dx = _ref_grid(cfg, cfg["window.A"])
    try:
        ref = Reference(profile, [T], half, dx)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = Report(cfg.kind, cfg.to_dict(), [cfg["run.seed"]])
    report.metrics["reference"] = {"dx": dx, "half_width": half}
    out = _hydro_common(cfg, profile, ref, jobs, report)
    ns = cfg["scales.n"]
    seeds = cfg["run.seeds"]
    for a, b in zip(ns, ns[1:]):
        frac = float(np.mean(out[b]["l1"] < out[a]["l1"]))
        report.add(check_ge(f"paired seeds with smaller L1 at n = {b} than n = {a}", frac,
                            cfg["check.paired_fraction"], STATISTICAL, seeds=seeds))
    report.add(check_le(f"mean L1 at n = {ns[-1]}", out[ns[-1]]["l1"].mean(), cfg["check.l1_max"], STATISTICAL,
                        seeds=seeds, stderr=_se(out[ns[-1]]["l1"])))
    _window_audit(cfg, profile, ref, out, report)
    return report


# ---------------------------------------------------------------- strong hydrodynamics

STRONG_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "run.realizations": 10,
    "run.mode": "keyed",
    "profile.kind": "step",
    "profile.lambda": 0.5,
    "profile.rho": 0.0,
    "profile.breaks": [-1.0, 0.0],
    "profile.values": [0.5],
    "scales.n": [200, 800, 3200],
    "time.T": 1.0,
    "time.snapshots": [0.25, 0.5, 0.75, 1.0],
    "window.margin": 0.25,
    "window.half_width": 0.0,
    "ref.dx": 0.0,
    "observables.functions": ["hat", "gauss", "indicator"],
    "check.min_decreasing": 8,
}


def _strong_reach(cfg) -> float:
    return max(max(abs(a), abs(b)) for a, b in (f.support for f in _functions(cfg["observables.functions"])))


def _validate_strong(cfg):
    if cfg["run.mode"] != "keyed":
        raise ConfigError("strong hydrodynamics needs the keyed clock field: gillespie mode has no common noise")
    _need(cfg["time.T"] > 0, "need T > 0")
    _need(cfg["run.realizations"] >= 1, "need at least one realization")
    snaps = cfg["time.snapshots"]
    _need(all(0 <= s <= cfg["time.T"] for s in snaps) and snaps == sorted(snaps), "snapshots must be sorted in [0, T]")
    _need(all(n >= 1 for n in cfg["scales.n"]), "scales must be positive")
    _profile(cfg)
    for n in cfg["scales.n"]:
        _window_sites(cfg, n, _strong_reach(cfg))


def _strong_task(task):
    (pkind, pvals, pbreaks), n, master, k, T, snaps, half, fnames = task
    profile = DensityProfile(pkind, pvals, pbreaks)
    topo = centered_segment(half)
    eps = 1.0 / n
    eta0 = sample_product(profile, topo, RngKey(master, Purpose.INIT, replica=_replica_id(k, n)), scale_eps=eps)
    # the clock field does not depend on n: one realization drives every scale
    res = dynamics.evolve(eta0, T * n, RngKey(master, Purpose.CLOCK, replica=k), mode="keyed",
                          snapshot_times=[s * n for s in snaps])
    x = eps * topo.sites()
    fx = np.array([TEST_FUNCTIONS[f](x) for f in fnames])
    return np.array([eps * fx @ c.to_array().astype(float) for c in res.snapshots])


def run_strong_hydro(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Per-realization sup-over-time pairing errors along the scale list."""
    _validate_strong(cfg)
    profile = _profile(cfg)
    T, snaps, ns = cfg["time.T"], cfg["time.snapshots"], cfg["scales.n"]
    fnames = cfg["observables.functions"]
    fns = _functions(fnames)
    reach = _strong_reach(cfg)
    gh, gdx = _ref_grid(cfg, reach)
    ref = Reference(profile, snaps, gh, gdx)
    master, R = cfg["run.seed"], cfg["run.realizations"]
    pspec = (profile.kind, profile.values, profile.breaks)
    report = Report(cfg.kind, cfg.to_dict(), [master])
    err = np.zeros((R, len(ns)))
    per_f = np.zeros((R, len(ns), len(fns)))
    for j, n in enumerate(ns):
        half = _window_sites(cfg, n, reach)
        sites = np.arange(-half, half + 1)
        pref = np.array([[_pairing_reference(ref, f, 1.0 / n, sites, s) for f in fns] for s in snaps])
        results = _map(_strong_task, [(pspec, n, master, k, T, tuple(snaps), half, tuple(fnames)) for k in range(R)], jobs)
        for k, pair in enumerate(results):
            sup = np.abs(pair - pref).max(axis=0)
            per_f[k, j] = sup
            err[k, j] = sup.max()
        report.metrics[f"n{n}"] = {
            "window_sites": 2 * half + 1,
            "sup_error_per_realization": err[:, j].tolist(),
            "sup_error_by_function": {f: per_f[:, j, i].tolist() for i, f in enumerate(fnames)},
        }
    decreasing = int(np.sum(np.all(np.diff(err, axis=1) < 0, axis=1))) if len(ns) > 1 else R
    report.metrics["decreasing_realizations"] = decreasing
    report.add(check_ge("realizations with decreasing sup error along n", decreasing,
                        min(cfg["check.min_decreasing"], R), STATISTICAL, realizations=R))
    again = _strong_task((pspec, ns[0], master, 0, T, tuple(snaps), _window_sites(cfg, ns[0], reach), tuple(fnames)))
    sites = np.arange(-_window_sites(cfg, ns[0], reach), _window_sites(cfg, ns[0], reach) + 1)
    pref = np.array([[_pairing_reference(ref, f, 1.0 / ns[0], sites, s) for f in fns] for s in snaps])
    rerun = float(np.abs(again - pref).max())
    report.add(check_true("rerun of realization 0 is bit-identical", rerun == err[0, 0], EXACT, n=ns[0]))
    return report


# ---------------------------------------------------------------- stationarity

STATIONARITY_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "run.mode": "gillespie",
    "generator.n_min": 3,
    "generator.n_max": 12,
    "generator.negative_control": True,
    "sample.L": 512,
    "sample.rho": 0.3,
    "sample.T": 100.0,
    "sample.replicas": 100,
    "flux.L": 1024,
    "flux.rho": [0.25, 0.5, 0.75],
    "flux.T": 2000.0,
    "flux.replicas": 50,
    "check.sigmas": 3.0,
}


def _validate_stationarity(cfg):
    _need(3 <= cfg["generator.n_min"] <= cfg["generator.n_max"] <= 14, "generator sizes must satisfy 3 <= n_min <= n_max <= 14")
    _need(cfg["sample.replicas"] >= 2 and cfg["flux.replicas"] >= 2, "need at least two replicas")
    _need(all(0 <= r <= 1 for r in cfg["flux.rho"] + [cfg["sample.rho"]]), "densities must lie in [0, 1]")
    _need(cfg["sample.T"] > 0 and cfg["flux.T"] > 0, "need positive times")
    _need(cfg["run.mode"] in ("keyed", "gillespie"), "run.mode must be keyed or gillespie")


def _stationary_task(task):
    L, rho, T, master, rid, mode, track = task
    topo = Ring(L)
    eta0 = sample_product(DensityProfile.constant(rho), topo, RngKey(master, Purpose.INIT, replica=rid))
    res = dynamics.evolve(eta0, T, RngKey(master, Purpose.CLOCK, replica=rid), mode=mode, track_current=track)
    occ = res.config.to_array().astype(float)
    cur = obs.mean_current(res.current, T) if track else 0.0
    return float(occ.mean()), float(np.mean(occ * np.roll(occ, -1))), cur


def run_stationarity(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Exact generator identity on small tori plus statistical checks of the product measures."""
    master, mode, k = cfg["run.seed"], cfg["run.mode"], cfg["check.sigmas"]
    report = Report(cfg.kind, cfg.to_dict(), [master])
    for n in range(cfg["generator.n_min"], cfg["generator.n_max"] + 1):
        res = dynamics.stationarity_identity_check(n)
        detail = {} if res.passed else {"counterexample": dynamics.state_string(res.counterexample, n)}
        report.add(check_true(f"out-rate equals in-rate on the torus of size {n}", res.passed, EXACT, **detail))
    if cfg["generator.negative_control"]:
        broken = dynamics.ALL_MOVES - {"10>01"} | {"100>010"}
        res = dynamics.stationarity_identity_check(6, broken)
        report.add(check_true("identity fails once a move is removed (negative control)", not res.passed, EXACT))
    L, rho, T, R = cfg["sample.L"], cfg["sample.rho"], cfg["sample.T"], cfg["sample.replicas"]
    rows = _map(_stationary_task, [(L, rho, T, master, r, mode, False) for r in range(R)], jobs)
    dens = np.array([r[0] for r in rows])
    pairs = np.array([r[1] for r in rows])
    report.metrics["sample"] = {
        "density_mean": float(dens.mean()), "density_stderr": _se(dens),
        "pair_mean": float(pairs.mean()), "pair_stderr": _se(pairs),
    }
    report.add(check_le("density deviation in stderr units", abs(dens.mean() - rho) / _se(dens), k, STATISTICAL,
                        replicas=R, target=rho))
    report.add(check_le("adjacent-pair deviation in stderr units", abs(pairs.mean() - rho**2) / _se(pairs), k,
                        STATISTICAL, replicas=R, target=rho**2))
    LF, TF, RF = cfg["flux.L"], cfg["flux.T"], cfg["flux.replicas"]
    report.metrics["current"] = {}
    for i, r in enumerate(cfg["flux.rho"]):
        base = (i + 1) * 1_000_000
        rows = _map(_stationary_task, [(LF, r, TF, master, base + q, mode, True) for q in range(RF)], jobs)
        cur = np.array([row[2] for row in rows])
        target = float(claw.flux(r))
        report.metrics["current"][repr(r)] = {"mean": float(cur.mean()), "stderr": _se(cur), "target": target}
        report.add(check_le(f"bond current at density {r} vs G, stderr units", abs(cur.mean() - target) / _se(cur), k,
                            STATISTICAL, replicas=RF, target=target))
    return report


# ---------------------------------------------------------------- coupling suite

COUPLING_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "ring.L": 256,
    "ring.trials": 1000,
    "ring.t": 20.0,
    "segment.L": 256,
    "segment.trials": 300,
    "segment.t": 20.0,
    "multi.copies": 4,
    "multi.trials": 100,
    "multi.t": 20.0,
    "order.trials": 1000,
    "order.t": 1000.0,
    "gs.samples": 100000,
    "gs.width": 9,
    "hazard.L": 64,
    "hazard.trials": 10000,
    "hazard.min_rate": 2.0,
}


def _validate_coupling(cfg):
    _need(cfg["ring.L"] >= 8 and cfg["segment.L"] >= 8, "need at least 8 sites")
    _need(cfg["multi.copies"] >= 2, "need at least two copies")
    _need(cfg["gs.width"] >= 7, "gs.width must be at least 7")
    _need(cfg["hazard.L"] >= 8, "hazard.L must be at least 8")
    _need(min(cfg["ring.t"], cfg["segment.t"], cfg["multi.t"], cfg["order.t"]) > 0, "times must be positive")


def _pair_states(topo, master: int, rid: int, kind: int, copies: int = 2):
    """Initial copies: kind 0 thins zeta (ordered), 1 shuffles it, 2 moves a few particles."""
    zeta = sample_product(DensityProfile.constant(0.5), topo, RngKey(master, Purpose.INIT, replica=rid)).to_array()
    rng = RngKey(master, Purpose.AUX, replica=rid).generator()
    out = [zeta]
    for _ in range(copies - 1):
        prev = out[-1]
        if kind == 0:
            nxt = prev & (rng.random(prev.size) >= 0.1).astype(prev.dtype)
        elif kind == 1:
            nxt = rng.permutation(prev)
        else:
            nxt = prev.copy()
            for _ in range(5):
                i, j = rng.integers(0, prev.size, 2)
                nxt[i], nxt[j] = nxt[j], nxt[i]
        out.append(nxt)
    return [Configuration.from_array(topo, o) for o in out]


def _coupling_task(task):
    topo_kind, L, t, master, rid, kind, copies = task
    topo = Ring(L) if topo_kind == "ring" else Segment(L)
    ens = coupling.CoupledEnsemble.of(*_pair_states(topo, master, rid, kind, copies))
    try:
        _, rep = coupling.coupled_evolve_audited(ens, t, RngKey(master, Purpose.CLOCK, replica=rid))
    except coupling.CouplingViolation as exc:
        return {"violation": str(exc), "events": 0, "annihilated": 0}
    return {"violation": None, "events": rep.n_events, "annihilated": rep.annihilated_pairs}


def _audit_block(report, name, rows, trials):
    bad = [r["violation"] for r in rows if r["violation"]]
    events = sum(r["events"] for r in rows)
    report.metrics[name] = {"trials": trials, "events": events, "annihilated_pairs": sum(r["annihilated"] for r in rows),
                            "violations": len(bad)}
    detail = {"trials": trials, "events": events}
    if bad:
        detail["first_violation"] = bad[0]
    report.add(check_le(f"{name}: coupling violations", len(bad), 0, EXACT, **detail))


def run_coupling_suite(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Exact coupling audits, order preservation, attractiveness sweep, annihilation hazard."""
    master = cfg["run.seed"]
    report = Report(cfg.kind, cfg.to_dict(), [master])
    n = cfg["ring.trials"]
    rows = _map(_coupling_task, [("ring", cfg["ring.L"], cfg["ring.t"], master, r, r % 3, 2) for r in range(n)], jobs)
    _audit_block(report, "ring pairs", rows, n)
    n = cfg["segment.trials"]
    base = 1 << 21
    rows = _map(_coupling_task, [("segment", cfg["segment.L"], cfg["segment.t"], master, base + r, r % 3, 2)
                                 for r in range(n)], jobs)
    _audit_block(report, "segment pairs", rows, n)
    n = cfg["multi.trials"]
    base = 2 << 21
    rows = _map(_coupling_task, [("ring", cfg["ring.L"], cfg["multi.t"], master, base + r, r % 3, cfg["multi.copies"])
                                 for r in range(n)], jobs)
    _audit_block(report, f"{cfg['multi.copies']}-copy ensembles", rows, n)
    n = cfg["order.trials"]
    base = 3 << 21
    rows = _map(_coupling_task, [("ring", cfg["ring.L"], cfg["order.t"], master, base + r, 0, 2) for r in range(n)], jobs)
    _audit_block(report, "ordered pairs, long run", rows, n)

    rng = RngKey(master, Purpose.AUX, replica=4 << 21).generator()
    N, W = cfg["gs.samples"], cfg["gs.width"]
    zeta = rng.integers(0, 2, (N, W))
    xi = zeta & rng.integers(0, 2, (N, W))
    gs = coupling.check_gs_inequalities(xi, zeta)
    fails = int((~gs.first_ok).sum() + (~gs.second_ok).sum())
    report.metrics["attractiveness"] = {"patterns": N, "width": W, "failures": fails}
    report.add(check_le("attractiveness inequalities: failing sites", fails, 0, EXACT, patterns=N))
    zr = np.array([0, 0, 0, 0, 1, 1, 0])
    xr = np.array([0, 0, 0, 0, 0, 1, 0])
    eq = coupling.check_gs_inequalities(xr, zr)
    report.add(check_true("equality pattern for the first inequality", int(eq.first_lhs[0]) == int(eq.first_rhs[0]) > 0,
                          EXACT, lhs=int(eq.first_lhs[0]), rhs=int(eq.first_rhs[0])))

    hz = coupling.annihilation_hazard(cfg["hazard.L"], cfg["hazard.trials"], RngKey(master, Purpose.AUX, replica=5 << 21))
    report.metrics["annihilation_hazard"] = hz._asdict()
    report.add(check_ge("annihilation hazard, lower 95% bound", hz.lower, cfg["hazard.min_rate"], STATISTICAL,
                        trials=cfg["hazard.trials"], confidence=0.95))
    return report


# ---------------------------------------------------------------- PDE side

RIEMANN_DEFAULTS = {
    "riemann.lambda": 1.0,
    "riemann.rho": 0.0,
    "riemann.t": 1.0,
    "riemann.grid": 2001,
    "riemann.x_min": -3.0,
    "riemann.x_max": 3.0,
    "check.tol": 1e-10,
}


def _validate_riemann(cfg):
    _need(0 <= cfg["riemann.lambda"] <= 1 and 0 <= cfg["riemann.rho"] <= 1, "Riemann data must lie in [0, 1]")
    _need(cfg["riemann.t"] > 0, "t must be positive")
    _need(cfg["riemann.grid"] >= 2, "grid needs at least two points")
    _need(cfg["riemann.x_min"] < cfg["riemann.x_max"], "x_min must be below x_max")


def run_riemann(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Tabulate U(v) on a grid and cross-check it against the variational formula."""
    lam, rho, t = cfg["riemann.lambda"], cfg["riemann.rho"], cfg["riemann.t"]
    report = Report(cfg.kind, cfg.to_dict(), [])
    sol = claw.riemann_solve(lam, rho)
    x = np.linspace(cfg["riemann.x_min"], cfg["riemann.x_max"], cfg["riemann.grid"])
    v = x / t
    u = sol(v)
    report.tables["riemann.csv"] = Table(("v", "u"), list(zip(v, u)))
    var = claw.riemann_variational(lam, rho, v)
    bps = sol.breakpoints()
    off = np.array([min((abs(s - b) for b in bps), default=np.inf) > 1e-9 for s in v])
    dev = float(np.max(np.abs(u - var)[off], initial=0.0))
    report.add(check_le("case solver vs variational formula", dev, cfg["check.tol"], EXACT, points=int(off.sum())))
    dual = claw.riemann_solve(1 - lam, 1 - rho)
    ddev = float(np.max(np.abs(u - (1 - dual(v)))[off], initial=0.0))
    report.add(check_le("particle-hole duality", ddev, 1e-12, EXACT))
    jumps = sol.jumps()
    ok = all(claw.oleinik_check(a, b) and abs(claw.rh_speed(a, b) - s) <= 1e-12 for s, a, b in jumps)
    report.add(check_true("every jump is admissible and moves at its chord speed", ok, EXACT, jumps=len(jumps)))
    report.metrics["pieces"] = [{"kind": p.kind, "v_lo": p.v_lo, "v_hi": p.v_hi, "value": p.value} for p in sol.pieces]
    report.metrics["jumps"] = [{"v": s, "u_minus": a, "u_plus": b} for s, a, b in jumps]
    return report


GODUNOV_DEFAULTS = {
    "riemann.lambda": 1.0,
    "riemann.rho": 0.0,
    "godunov.dx": [0.004, 0.002, 0.001],
    "godunov.cfl": 0.4,
    "time.T": 1.0,
    "window.A": 3.0,
    "check.l1_max": 0.01,
    "check.speed_tol": 0.02,
    "check.roundoff": 1e-12,
}


def _validate_godunov(cfg):
    _need(0 <= cfg["riemann.lambda"] <= 1 and 0 <= cfg["riemann.rho"] <= 1, "Riemann data must lie in [0, 1]")
    _need(0 < cfg["godunov.cfl"] <= 0.5, "CFL number must lie in (0, 0.5]")
    _need(all(d > 0 for d in cfg["godunov.dx"]), "cell sizes must be positive")
    _need(cfg["time.T"] > 0 and cfg["window.A"] > 0, "need T > 0 and A > 0")
    half = math.ceil(cfg["window.A"] + 2 * cfg["time.T"] + 1.0)
    for dx in cfg["godunov.dx"]:
        m = 2 * half / dx
        _need(abs(m - round(m)) < 1e-6, f"cell size {dx} must divide the domain [-{half}, {half}]")


def run_godunov(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Godunov convergence to the exact Riemann solution and discrete shock speed."""
    lam, rho, T, A = cfg["riemann.lambda"], cfg["riemann.rho"], cfg["time.T"], cfg["window.A"]
    sol = claw.riemann_solve(lam, rho)
    half = float(math.ceil(A + 2 * T + 1.0))
    profile = DensityProfile.step(lam, rho)
    report = Report(cfg.kind, cfg.to_dict(), [])
    errs, speeds = [], []
    jumps = sol.jumps()
    for k, dx in enumerate(cfg["godunov.dx"]):
        run = claw.godunov_evolve(profile, half, dx, T, cfg["godunov.cfl"], snapshot_times=[T / 2])
        g = run.grid
        errs.append(claw.l1_error_cells(g, sol, T, -A, A))
        inside = (g.edges[:-1] >= -A - 1e-12) & (g.edges[1:] <= A + 1e-12)
        e = g.edges
        exact = [sol.cell_average(a, b, T) for a, b in zip(e[:-1][inside], e[1:][inside])]
        report.tables[f"profile_dx{k}.csv"] = profile_table(g.centers[inside], g.u[inside], exact)
        if jumps:
            v, um, up = jumps[-1]
            lvl = 0.5 * (um + up)
            near = lambda gr, t: np.abs(gr.centers - v * t) <= 0.5
            h = run.snapshots[0]
            x1 = claw.level_crossing(h.centers[near(h, T / 2)], h.u[near(h, T / 2)], lvl)
            x2 = claw.level_crossing(g.centers[near(g, T)], g.u[near(g, T)], lvl)
            speeds.append((x2 - x1) / (T / 2))
    report.metrics["l1"] = dict(zip([repr(d) for d in cfg["godunov.dx"]], errs))
    floor = cfg["check.roundoff"]
    mono = all(b < a or max(a, b) <= floor for a, b in zip(errs, errs[1:]))
    report.add(check_true("L1 error decreases as the mesh is refined", mono, EXACT, errors=errs, roundoff_floor=floor))
    report.add(check_le("L1 error at the finest mesh", errs[-1], cfg["check.l1_max"], EXACT))
    if jumps:
        v = jumps[-1][0]
        s = speeds[-1]
        report.metrics["shock_speed"] = {"exact": v, "measured": speeds}
        if v != 0:
            report.add(check_le("relative shock speed error", abs(s - v) / abs(v), cfg["check.speed_tol"], EXACT))
        else:
            report.add(check_le("standing shock drift speed", abs(s), min(cfg["godunov.dx"]) / T, EXACT))
    return report


FLUX_DEFAULTS = {"flux.points": 101, "check.tol": 1e-12}


def _validate_flux(cfg):
    _need(cfg["flux.points"] >= 2, "need at least two points")


def run_flux_check(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Exact product-measure expectation of the bond flux against G."""
    report = Report(cfg.kind, cfg.to_dict(), [])
    rho = np.linspace(0.0, 1.0, cfg["flux.points"])
    exp_ = np.array([obs.flux_expectation(float(r)) for r in rho])
    g = claw.flux(rho)
    diff = np.abs(exp_ - g)
    report.tables["flux.csv"] = Table(("rho", "expected_flux", "G", "abs_diff"), list(zip(rho, exp_, g, diff)))
    report.add(check_le("max |expected flux - G|", float(diff.max()), cfg["check.tol"], EXACT, points=rho.size))
    return report


# ---------------------------------------------------------------- finite propagation

PROPAGATION_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "prop.L": 600,
    "prop.x": 0,
    "prop.y": 200,
    "prop.t": 20.0,
    "prop.v": 5.0,
    "prop.control_v": 0.1,
    "prop.trials": 1000,
    "check.min_frequency": 0.99,
}


def _validate_propagation(cfg):
    x, y, L = cfg["prop.x"], cfg["prop.y"], cfg["prop.L"]
    _need(0 <= x < y < L - 1, "need 0 <= x < y < L - 1")
    _need(cfg["prop.t"] > 0 and cfg["prop.v"] > 0 and cfg["prop.control_v"] > 0, "need positive t and speeds")
    for v in (cfg["prop.v"], cfg["prop.control_v"]):
        _need(math.ceil(x + v * cfg["prop.t"]) <= math.floor(y - v * cfg["prop.t"]), f"interval empty at v = {v}")
    _need(cfg["prop.trials"] >= 1, "need at least one trial")


def _propagation_states(cfg, lo: int, hi: int):
    topo = Ring(cfg["prop.L"])
    x, y, master = cfg["prop.x"], cfg["prop.y"], cfg["run.seed"]
    zs, xs = [], []
    inside = np.zeros(topo.L, dtype=bool)
    inside[x : y + 1] = True
    for r in range(lo, hi):
        z = sample_product(DensityProfile.constant(0.5), topo, RngKey(master, Purpose.INIT, replica=r)).to_array()
        xi = np.where(inside, z, 1 - z)
        zs.append(Configuration.from_array(topo, z))
        xs.append(Configuration.from_array(topo, xi))
    return zs, xs


def _propagation_task(task):
    cfg_values, v, lo, hi = task
    cfg = ExperimentConfig("finite-prop", cfg_values)
    zs, xs = _propagation_states(cfg, lo, hi)
    res = coupling.finite_propagation_test(zs, xs, cfg["prop.x"], cfg["prop.y"], cfg["prop.t"], v,
                                           RngKey(cfg["run.seed"], Purpose.CLOCK), replica_offset=lo)
    return res.agree


def run_finite_propagation(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Agreement of coupled copies on the shrinking interval, with a too-slow control speed."""
    report = Report(cfg.kind, cfg.to_dict(), [cfg["run.seed"]])
    N = cfg["prop.trials"]
    chunks = max(1, min(jobs, N))
    bounds = np.linspace(0, N, chunks + 1).astype(int)
    freq = {}
    for v in (cfg["prop.v"], cfg["prop.control_v"]):
        agree = sum(_map(_propagation_task, [(dict(cfg.values), v, int(a), int(b)) for a, b in zip(bounds, bounds[1:])], jobs))
        freq[v] = agree / N
    t = cfg["prop.t"]
    a, b = math.ceil(cfg["prop.x"] + cfg["prop.v"] * t), math.floor(cfg["prop.y"] - cfg["prop.v"] * t)
    report.metrics["agreement"] = {repr(v): f for v, f in freq.items()}
    report.metrics["interval"] = [a, b]
    m = cfg["check.min_frequency"]
    report.add(check_ge(f"agreement frequency at v = {cfg['prop.v']}", freq[cfg["prop.v"]], m, STATISTICAL, trials=N))
    report.add(check_le(f"agreement frequency at control v = {cfg['prop.control_v']} (must fall short)",
                        freq[cfg["prop.control_v"]], m - 1e-12, STATISTICAL, trials=N))
    return report


# ---------------------------------------------------------------- exploratory scans

HALFLINE_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "run.mode": "gillespie",
    "run.replicas": 4,
    "halfline.L": 0,
    "halfline.ell": [64, 256, 1024],
    "halfline.rho0": 0.5,
    "halfline.wall_block": 64,
    "halfline.batches": 5,
    "time.T_burn": 100.0,
    "time.T_sample": 400.0,
    "time.dt": 10.0,
}


def _halfline_L(cfg) -> int:
    return cfg["halfline.L"] or 20 * max(cfg["halfline.ell"])


def _validate_halfline(cfg):
    L = _halfline_L(cfg)
    _need(all(1 <= e < L / 10 for e in cfg["halfline.ell"]), "every ell must satisfy 1 <= ell < L/10")
    _need(0 <= cfg["halfline.rho0"] <= 1, "rho0 must lie in [0, 1]")
    _need(1 <= cfg["halfline.wall_block"] <= L, "wall_block must fit the segment")
    _need(cfg["time.dt"] > 0 and cfg["time.T_burn"] >= 0 and cfg["time.T_sample"] > 0, "need positive times")
    n_samp = int(math.floor(cfg["time.T_sample"] / cfg["time.dt"] + 1e-9))
    _need(1 <= cfg["halfline.batches"] <= n_samp, "need 1 <= batches <= number of samples per replica")
    _need(cfg["run.replicas"] >= 1, "need at least one replica")


def _halfline_task(task):
    L, rho0, times, master, rid, mode, ells, wall = task
    topo = Segment(L)
    eta0 = sample_product(DensityProfile.constant(rho0), topo, RngKey(master, Purpose.INIT, replica=rid))
    res = dynamics.evolve(eta0, times[-1], RngKey(master, Purpose.CLOCK, replica=rid), mode=mode,
                          snapshot_times=times)
    fl = np.array([[obs.interval_fluctuation(c, e) for e in ells] for c in res.snapshots])
    near = np.array([c.to_array()[:wall].mean() for c in res.snapshots])
    return fl, near


def run_halfline(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Interval fluctuations next to the left wall of a blocked segment (estimates only)."""
    L = _halfline_L(cfg)
    ells = cfg["halfline.ell"]
    dt, Tb, Ts = cfg["time.dt"], cfg["time.T_burn"], cfg["time.T_sample"]
    times = list(np.arange(0.0, Tb + Ts + 1e-9, dt))
    sample_from = int(np.searchsorted(times, Tb - 1e-9))
    master, R = cfg["run.seed"], cfg["run.replicas"]
    rows = _map(_halfline_task, [(L, cfg["halfline.rho0"], times, master, r, cfg["run.mode"], tuple(ells),
                                  cfg["halfline.wall_block"]) for r in range(R)], jobs)
    report = Report(cfg.kind, cfg.to_dict(), [master])
    fl = np.stack([r[0] for r in rows])  # replica, time, ell
    near = np.stack([r[1] for r in rows])
    report.tables["wall_density.csv"] = series_table(times, near.mean(axis=0), [_se(c) for c in near.T])
    B = cfg["halfline.batches"]
    est = {}
    for i, e in enumerate(ells):
        x = fl[:, sample_from:, i]
        dev2 = (x - x.mean()) ** 2
        batches = [b for row in dev2 for b in np.array_split(row, B)]
        bm = np.array([b.mean() for b in batches])
        var = float(dev2.mean())
        half = 1.96 * _se(bm) if bm.size > 1 else float("nan")
        est[str(e)] = {"variance": var, "variance_over_ell": var / e, "ci95": [(var - half) / e, (var + half) / e],
                       "variance_t0": float(np.mean(fl[:, 0, i] ** 2))}
    report.metrics["L"] = L
    report.metrics["variance"] = est
    report.metrics["near_wall_density_final"] = float(near[:, -1].mean())
    return report


FLUCTUATION_DEFAULTS = {
    "run.seed": DEFAULT_SEED,
    "run.mode": "gillespie",
    "run.replicas": 100,
    "fluct.eps": [0.01, 0.005],
    "fluct.t": [0.0, 0.1, 0.25, 0.5],
    "fluct.functions": ["hat", "gauss"],
    "fluct.ring_factor": 16,
    "check.residual": 1e-10,
}


def _validate_fluctuations(cfg):
    _need(all(0 < e < 1 for e in cfg["fluct.eps"]), "eps must lie in (0, 1)")
    ts = cfg["fluct.t"]
    _need(all(t >= 0 for t in ts) and ts == sorted(ts), "times must be sorted and nonnegative")
    _functions(cfg["fluct.functions"], FLUCTUATION_FUNCTIONS)
    _need(cfg["run.replicas"] >= 2, "need at least two replicas")
    for e in cfg["fluct.eps"]:
        for f in _functions(cfg["fluct.functions"], FLUCTUATION_FUNCTIONS):
            lo, hi = f.support
            _need((hi - lo) / e + 1 < math.ceil(cfg["fluct.ring_factor"] / e), "ring too small for the test functions")


class _Scaled:
    """A test function times a constant, keeping support and kinks."""

    def __init__(self, f, c):
        self.f, self.c = f, c
        self.support = f.support

    def __call__(self, x):
        return self.c * self.f(x)

    def kinks(self):
        return self.f.kinks()


def _fluct_task(task):
    eps, L, s_list, fnames, master, rid, mode = task
    topo = Ring(L)
    eta0 = sample_product(DensityProfile.constant(0.5), topo, RngKey(master, Purpose.INIT, replica=rid))
    res = dynamics.evolve(eta0, s_list[-1], RngKey(master, Purpose.CLOCK, replica=rid), mode=mode,
                          snapshot_times=s_list)
    fns = [_Scaled(FLUCTUATION_FUNCTIONS[n], 0.0 if n == "zero" else 1.0) for n in fnames]
    return np.array([[obs.fluctuation_pairing(c, f, eps, s) for f in fns] for c, s in zip(res.snapshots, s_list)])


def run_fluctuations(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Variance of the fluctuation field at the log-corrected time scale (estimates only)."""
    master, R = cfg["run.seed"], cfg["run.replicas"]
    fnames = cfg["fluct.functions"]
    report = Report(cfg.kind, cfg.to_dict(), [master])
    worst = 0.0
    for j, eps in enumerate(cfg["fluct.eps"]):
        L = int(math.ceil(cfg["fluct.ring_factor"] / eps))
        s_list = []
        for t in cfg["fluct.t"]:
            if t == 0:
                s_list.append(0.0)
                continue
            st = obs.scaling_time(t, eps)
            if not st.clamped:
                worst = max(worst, abs(eps**2 * st.s * math.sqrt(math.log(st.s)) - t) / t)
            s_list.append(st.s)
        rows = _map(_fluct_task, [(eps, L, s_list, tuple(fnames), master, _replica_id(r, j), cfg["run.mode"])
                                  for r in range(R)], jobs)
        X = np.stack(rows)  # replica, time, function
        key = f"eps{1 / eps:g}"
        report.metrics[key] = {"ring": L, "s": s_list}
        for i, name in enumerate(fnames):
            dev2 = (X[:, :, i] - X[:, :, i].mean(axis=0)) ** 2
            var = X[:, :, i].var(axis=0, ddof=1)
            se = np.array([_se(c) for c in dev2.T])
            report.tables[f"fluct_{key}_{name}.csv"] = series_table(cfg["fluct.t"], var, se)
            f = FLUCTUATION_FUNCTIONS[name]
            x = np.arange(math.ceil(f.support[0] / eps), math.floor(f.support[1] / eps) + 1)
            c = 0.0 if name == "zero" else 1.0
            report.metrics[key][name] = {"variance": var.tolist(), "stderr": se.tolist(),
                                         "product_variance": float(0.25 * eps * np.sum((c * f(eps * x)) ** 2))}
    report.metrics["scaling_time_residual"] = worst
    report.add(check_le("scaling-time solver relative residual", worst, cfg["check.residual"], EXACT))
    return report


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class Experiment:
    kind: str
    defaults: dict
    validate: Callable
    run: Callable
    summary: str


EXPERIMENTS = {
    e.kind: e
    for e in (
        Experiment("stationarity", STATIONARITY_DEFAULTS, _validate_stationarity, run_stationarity,
                   "generator identity on small tori and stationarity statistics"),
        Experiment("coupling", COUPLING_DEFAULTS, _validate_coupling, run_coupling_suite,
                   "coupling audits, attractiveness sweep, annihilation hazard"),
        Experiment("riemann", RIEMANN_DEFAULTS, _validate_riemann, run_riemann,
                   "exact Riemann solution on a grid (v,u table)"),
        Experiment("godunov", GODUNOV_DEFAULTS, _validate_godunov, run_godunov,
                   "Godunov convergence on Riemann data"),
        Experiment("hydro-riemann", HYDRO_RIEMANN_DEFAULTS, _validate_hydro_riemann, run_hydro_riemann,
                   "particle system vs exact Riemann solution"),
        Experiment("hydro-cauchy", HYDRO_CAUCHY_DEFAULTS, _validate_hydro_cauchy, run_hydro_cauchy,
                   "particle system vs Godunov reference"),
        Experiment("strong-hydro", STRONG_DEFAULTS, _validate_strong, run_strong_hydro,
                   "pathwise pairing errors under one clock realization"),
        Experiment("finite-prop", PROPAGATION_DEFAULTS, _validate_propagation, run_finite_propagation,
                   "finite propagation speed of coupled copies"),
        Experiment("halfline", HALFLINE_DEFAULTS, _validate_halfline, run_halfline,
                   "interval fluctuations next to a wall (exploratory)"),
        Experiment("fluctuations", FLUCTUATION_DEFAULTS, _validate_fluctuations, run_fluctuations,
                   "fluctuation variance at the log-corrected scale (exploratory)"),
        Experiment("flux-check", FLUX_DEFAULTS, _validate_flux, run_flux_check,
                   "expected bond flux under product measures vs G"),
    )
}


def make_config(kind: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults of ``kind`` with overrides applied, validated."""
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}")
    exp = EXPERIMENTS[kind]
    cfg = build_config(kind, exp.defaults, overrides or {})
    exp.validate(cfg)
    return cfg


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    exp = EXPERIMENTS[cfg.kind]
    exp.validate(cfg)
    return exp.run(cfg, jobs)
