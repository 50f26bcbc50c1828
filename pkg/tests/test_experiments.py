import json

import numpy as np
import pytest

from dephydro import claw
from dephydro.config import ConfigError
from dephydro.experiments import EXPERIMENTS, Reference, make_config, run_experiment
from dephydro.lattice import DensityProfile

SMALL = {
    "stationarity": {"generator.n_max": 6, "sample.L": 64, "sample.T": 5.0, "sample.replicas": 20,
                     "flux.L": 64, "flux.T": 5.0, "flux.replicas": 20},
    "coupling": {"ring.L": 32, "ring.trials": 6, "ring.t": 3.0, "segment.L": 32, "segment.trials": 6,
                 "segment.t": 3.0, "multi.trials": 3, "multi.t": 3.0, "order.trials": 3, "order.t": 5.0,
                 "gs.samples": 500, "hazard.L": 16, "hazard.trials": 200},
    "riemann": {"riemann.grid": 51},
    "godunov": {"godunov.dx": [0.02, 0.01], "check.l1_max": 1.0, "check.speed_tol": 1.0},
    "flux-check": {},
    "hydro-riemann": {"run.seeds": 2, "scales.n": [20, 40], "window.A": 1.0, "check.l1_max": 1.0},
    "hydro-cauchy": {"run.seeds": 2, "scales.n": [20, 40], "window.A": 3.0, "check.l1_max": 1.0},
    "strong-hydro": {"run.realizations": 2, "scales.n": [20, 40], "check.min_decreasing": 0},
    "finite-prop": {"prop.L": 120, "prop.y": 60, "prop.t": 4.0, "prop.trials": 20},
    "halfline": {"run.replicas": 2, "halfline.ell": [4, 8], "halfline.L": 100, "halfline.wall_block": 8, "halfline.batches": 2,
                 "time.T_burn": 2.0, "time.T_sample": 8.0, "time.dt": 2.0},
    "fluctuations": {"run.replicas": 3, "fluct.eps": [0.1], "fluct.t": [0.0, 0.1], "fluct.ring_factor": 4},
}


def test_every_experiment_has_a_small_config():
    assert set(SMALL) == set(EXPERIMENTS)


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_small_runs_write_reports(kind, tmp_path):
    cfg = make_config(kind, SMALL[kind])
    rep = run_experiment(cfg)
    rep.write(tmp_path, cfg.echo())
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["experiment"] == kind
    # the half-line run reports estimates only
    assert bool(data["checks"]) == (kind != "halfline")
    for c in data["checks"]:
        assert c["kind"] in ("exact", "statistical")
    for name in data["tables"]:
        header = (tmp_path / name).read_text().splitlines()[0]
        assert "," in header


@pytest.mark.parametrize("kind", ["riemann", "flux-check", "stationarity", "coupling", "finite-prop"])
def test_small_runs_pass(kind):
    assert run_experiment(make_config(kind, SMALL[kind])).passed


def test_jobs_do_not_change_results():
    cfg = make_config("coupling", SMALL["coupling"])
    a, b = run_experiment(cfg, jobs=1), run_experiment(cfg, jobs=2)
    assert a.metrics == b.metrics
    cfg = make_config("hydro-riemann", SMALL["hydro-riemann"])
    a, b = run_experiment(cfg, jobs=1), run_experiment(cfg, jobs=2)
    assert a.metrics == b.metrics
    assert {k: t.to_csv() for k, t in a.tables.items()} == {k: t.to_csv() for k, t in b.tables.items()}


@pytest.mark.parametrize(
    "kind, overrides",
    [
        ("strong-hydro", {"run.mode": "gillespie"}),
        ("halfline", {"halfline.L": 100, "halfline.ell": [20]}),
        ("hydro-riemann", {"window.half_width": 0.5}),
        ("hydro-riemann", {"riemann.lambda": 1.5}),
        ("hydro-riemann", {"run.mode": "euler"}),
        ("hydro-cauchy", {"profile.breaks": [0.0, 1.0], "profile.values": [0.2, 0.3]}),
        ("godunov", {"godunov.cfl": 0.7}),
        ("fluctuations", {"fluct.functions": ["sine"]}),
    ],
)
def test_invalid_configs(kind, overrides):
    with pytest.raises(ConfigError):
        run_experiment(make_config(kind, {**SMALL[kind], **overrides}))


def test_riemann_table_matches_solver():
    rep = run_experiment(make_config("riemann", {"riemann.grid": 7, "riemann.x_min": -3.0, "riemann.x_max": 3.0}))
    rows = rep.tables["riemann.csv"].rows
    assert [r[0] for r in rows] == [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
    assert rows[0][1] == 1.0 and rows[-1][1] == 0.0


def test_reference_block_averages():
    prof = DensityProfile.step(1.0, 0.0)
    exact = Reference(prof, [1.0], 3.0, 0.0)
    edges = np.linspace(-2.0, 2.0, 5)
    got = exact.block_averages(edges, 1.0)
    sol = claw.riemann_solve(1.0, 0.0)
    assert got == pytest.approx([sol.cell_average(a, b, 1.0) for a, b in zip(edges[:-1], edges[1:])], abs=1e-12)
    # the exact Riemann reference and a fine Godunov reference agree on blocks
    table = DensityProfile.table([-4.0, 0.0, 4.0], [1.0, 0.0])
    grid = Reference(table, [1.0], 6.0, 0.002)
    assert np.max(np.abs(grid.block_averages(edges, 1.0) - got)) < 0.01
