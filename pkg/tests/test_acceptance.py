"""Acceptance suite: one PASS/FAIL line per criterion, printed at the end of the run.

Statistical thresholds are frozen here; each line reports the measured values.
The full suite runs the desk-scale experiments and takes tens of minutes.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from conftest import record
from dephydro import claw, coupling, dynamics
from dephydro.clocks import Purpose, RngKey
from dephydro.experiments import make_config, run_experiment

pytestmark = pytest.mark.slow


def _check(report, prefix):
    hits = [c for c in report.checks if c.name.startswith(prefix)]
    assert hits, f"no check named {prefix!r}"
    return hits[0]


def _fmt(report, *prefixes):
    return "; ".join(f"{_check(report, p).name} = {_check(report, p).value:.4g}" for p in prefixes)


def test_criterion_01_generator_identity():
    t0 = time.perf_counter()
    results = [dynamics.stationarity_identity_check(n) for n in range(3, 13)]
    elapsed = time.perf_counter() - t0
    ok = all(r.passed and r.out_rate == r.in_rate for r in results) and elapsed < 10.0
    states = sum(1 << n for n in range(3, 13))
    assert record(1, ok, f"out-rate == in-rate on all {states} configurations, n = 3..12, in {elapsed:.2f} s (< 10 s)")


def test_criterion_02_flux_identity():
    t0 = time.perf_counter()
    rep = run_experiment(make_config("flux-check", {"flux.points": 101, "check.tol": 1e-12}))
    elapsed = time.perf_counter() - t0
    c = _check(rep, "max |expected flux")
    ok = rep.passed and elapsed < 1.0
    assert record(2, ok, f"max |E j - G| = {c.value:.2e} over 101 densities (<= 1e-12), {elapsed:.3f} s (< 1 s)")


def test_criterion_03_coupling_invariants():
    cfg = make_config("coupling", {
        "ring.L": 256, "ring.trials": 1000, "ring.t": 20.0,
        "segment.L": 256, "segment.trials": 300, "segment.t": 20.0,
        "multi.trials": 100, "order.trials": 100, "order.t": 200.0,
        "gs.samples": 10, "hazard.trials": 10,
    })
    rep = run_experiment(cfg)
    names = ["ring pairs", "segment pairs", "4-copy ensembles", "ordered pairs, long run"]
    audits = [_check(rep, f"{n}: coupling violations") for n in names]
    ring = rep.metrics["ring pairs"]
    per_trial = ring["events"] / ring["trials"]
    ok = all(c.passed for c in audits) and ring["trials"] >= 1000 and per_trial >= 1e4
    viol = sum(int(c.value) for c in audits)
    assert record(3, ok, f"{viol} violations; Ring(256): {ring['trials']} trials x {per_trial:.0f} events "
                         f"(count, signs, swaps, partial sums, order), plus segment, 4-copy and long ordered runs")


def test_criterion_04_attractiveness():
    rng = np.random.default_rng(20240611)
    zeta = rng.integers(0, 2, (100_000, 9))
    xi = zeta & rng.integers(0, 2, (100_000, 9))
    res = coupling.check_gs_inequalities(xi, zeta)
    fails = int((~res.first_ok).sum() + (~res.second_ok).sum())
    eq = coupling.check_gs_inequalities(np.array([0, 0, 0, 0, 0, 1, 0]), np.array([0, 0, 0, 0, 1, 1, 0]))
    lhs, rhs = int(eq.first_lhs[0]), int(eq.first_rhs[0])
    ok = fails == 0 and lhs == rhs > 0
    assert record(4, ok, f"{fails} failing sites on 1e5 ordered patterns; equality pattern gives {lhs} = {rhs}")


def test_criterion_05_riemann_solver():
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 21)
    vs = np.linspace(-2.5, 1.5, 201)
    dev = dual = 0.0
    points = 0
    admissible = True
    for lam in grid:
        for rho in grid:
            sol = claw.riemann_solve(lam, rho)
            other = claw.riemann_solve(1 - lam, 1 - rho)
            u = sol(vs)
            # at a breakpoint U is two-valued; compare only off the breakpoints
            off = np.ones(vs.size, dtype=bool)
            for b in sol.breakpoints():
                off &= np.abs(vs - b) > 1e-9
            dual = max(dual, float(np.max(np.abs(u - (1 - other(vs)))[off])))
            dev = max(dev, float(np.max(np.abs(u - claw.riemann_variational(lam, rho, vs))[off])))
            points += int(off.sum())
            admissible &= all(claw.oleinik_check(a, b) for _, a, b in sol.jumps())
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-10 and dual <= 1e-12 and admissible and elapsed < 5.0
    assert record(5, ok, f"case vs variational {dev:.1e} (<= 1e-10) on {points} points; duality {dual:.1e} "
                         f"(<= 1e-12); Oleinik {'ok' if admissible else 'violated'}; {elapsed:.2f} s (< 5 s)")


def test_criterion_06_godunov():
    t0 = time.perf_counter()
    reps = {case: run_experiment(make_config("godunov", {"riemann.lambda": case[0], "riemann.rho": case[1]}))
            for case in [(0.5, 0.0), (1.0, 0.0)]}
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in reps.values()) and elapsed < 60.0
    parts = []
    for (lam, rho), r in reps.items():
        errs = _check(r, "L1 error decreases").detail["errors"]
        floor = _check(r, "L1 error decreases").detail["roundoff_floor"]
        note = " (at roundoff)" if max(errs) <= floor else ""
        parts.append(f"({lam:g},{rho:g}) L1 " + ", ".join(f"{e:.2e}" for e in errs) + note)
    speed = _check(reps[(1.0, 0.0)], "relative shock speed error").value
    assert record(6, ok, "; ".join(parts) + f"; shock speed rel. error {speed:.3%} (<= 2%); {elapsed:.1f} s (< 60 s)")


@pytest.mark.parametrize("case", [(0.2, 0.4), (0.5, 0.0), (1.0, 0.0)])
def test_criterion_07_hydrodynamic_limit(case):
    cfg = make_config("hydro-riemann", {"riemann.lambda": case[0], "riemann.rho": case[1], "run.seeds": 20,
                                        "scales.n": [200, 800, 3200], "time.T": 1.0})
    rep = run_experiment(cfg)
    means = [rep.metrics[f"n{n}"]["l1_mean"] for n in (200, 800, 3200)]
    dec, last = _check(rep, "mean L1 strictly decreasing"), _check(rep, "mean L1 at n = 3200")
    ok = dec.passed and last.passed
    extra = [c for c in rep.checks if c not in (dec, last)]
    assert record(7, ok and all(c.passed for c in extra),
                  f"({case[0]:g},{case[1]:g}): mean L1 over 20 seeds " + " > ".join(f"{m:.4f}" for m in means)
                  + f" (n = 200, 800, 3200; < 0.05 at 3200)" + "".join(f"; {c.name} {c.value:.3g}" for c in extra))


def test_criterion_08_strong_hydrodynamics():
    cfg = make_config("strong-hydro", {"run.realizations": 10, "scales.n": [200, 800, 3200],
                                       "check.min_decreasing": 8})
    rep = run_experiment(cfg)
    dec = _check(rep, "realizations with decreasing")
    bit = _check(rep, "rerun of realization 0")
    means = [np.mean(rep.metrics[f"n{n}"]["sup_error_per_realization"]) for n in (200, 800, 3200)]
    assert record(8, rep.passed, f"{int(dec.value)}/10 realizations decreasing (>= 8); mean sup error "
                                 + " > ".join(f"{m:.4f}" for m in means) + f"; rerun bit-identical: {bit.passed}")


def test_criterion_09_finite_propagation():
    rep = run_experiment(make_config("finite-prop", {"prop.trials": 1000, "prop.t": 20.0, "prop.v": 5.0,
                                                     "prop.control_v": 0.1}))
    freq = rep.metrics["agreement"]
    assert record(9, rep.passed, f"agreement {freq['5.0']:.4f} at v = 5 (>= 0.99 over 1000 trials); "
                                 f"control v = 0.1 gives {freq['0.1']:.4f} (must fall short)")


def test_criterion_10_stationarity():
    rep = run_experiment(make_config("stationarity", {"generator.n_max": 3, "generator.negative_control": False}))
    m = rep.metrics
    dens = _check(rep, "density deviation")
    pair = _check(rep, "adjacent-pair deviation")
    cur = _check(rep, "bond current at density 0.75")
    c75 = m["current"]["0.75"]
    ok = dens.passed and pair.passed and cur.passed
    others = [c for c in rep.checks if c.name.startswith("bond current") and c is not cur]
    assert record(10, ok and all(c.passed for c in others),
                  f"density {m['sample']['density_mean']:.4f} ({dens.value:.2f} se), pairs {m['sample']['pair_mean']:.4f} "
                  f"({pair.value:.2f} se), current at 0.75 {c75['mean']:.4f} vs 0.1875 ({cur.value:.2f} se); all <= 3 se"
                  + "".join(f"; {c.name.split(' vs')[0]} {c.value:.2f} se" for c in others))


def _well_formed(out_dir):
    data = json.loads((out_dir / "report.json").read_text())
    for name in data["tables"]:
        with open(out_dir / name) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) >= 2 and all(len(r) == len(rows[0]) for r in rows)
        assert all(math.isfinite(float(v)) for r in rows[1:] for v in r)
    return data


def test_criterion_11_exploratory(tmp_path):
    half = make_config("halfline", {"halfline.ell": [64, 256, 1024]})
    rh = run_experiment(half)
    rh.write(tmp_path / "halfline", half.echo())
    dh = _well_formed(tmp_path / "halfline")
    fl = make_config("fluctuations", {"fluct.eps": [0.01, 0.005], "run.replicas": 40})
    rf = run_experiment(fl)
    rf.write(tmp_path / "fluct", fl.echo())
    df = _well_formed(tmp_path / "fluct")
    res = rf.metrics["scaling_time_residual"]
    var = [rh.metrics["variance"][str(e)]["variance"] for e in (64, 256, 1024)]
    ok = res < 1e-10 and len(dh["tables"]) >= 1 and len(df["tables"]) == 4 and rf.passed
    assert record(11, ok, "half-line variances " + ", ".join(f"{v:.1f}" for v in var)
                          + f" (ell = 64, 256, 1024); {len(df['tables'])} fluctuation curves; "
                          f"scaling-time residual {res:.1e} (< 1e-10)")
