import dataclasses
import csv
import io
import math

import numpy as np
import pytest

from coopnet import experiments
from coopnet.dynamics import GameParams, IntegrationFault, IntegratorConfig, TrajectoryRecord
from coopnet.experiments import (
    SWEEP_HEADER,
    ScenarioConfig,
    SweepSpec,
    build_network,
    fast_decay_plateau,
    run_scenario,
    run_sweep,
    summarize_sweep,
    sweep_csv,
    tragedy_regression,
)
from coopnet.model import ChannelParams


def quick(**kw) -> ScenarioConfig:
    integ = kw.pop("integrator", IntegratorConfig(s=1e-3, max_steps=400, record_every=100))
    return ScenarioConfig(integrator=integ, **kw)


def test_default_scenario_values():
    c = ScenarioConfig()
    assert (c.n, c.rho, c.seed) == (36, 4.0, 0)
    assert c.channel == ChannelParams(4.0, 0.1, 1.0)
    assert c.game == GameParams(1.0, 1.0, 1.0)
    assert c.integrator.s == 1e-4


def test_with_param_and_get_param():
    c = ScenarioConfig()
    for name, v in (("m", 3.0), ("tau", 0.5), ("eta", 2.0), ("eps", 0.2), ("rho", 1.5), ("r0", 2.0)):
        assert c.with_param(name, v).get_param(name) == v
    with pytest.raises(KeyError):
        c.with_param("bogus", 1.0)
    with pytest.raises(ValueError):
        c.with_param("tau", -1.0)


@pytest.mark.parametrize("kw", [{"n": 1}, {"rho": 0.0}, {"seed": -1}, {"replicate_count": 0}, {"domain": "disk"}])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_build_network_density():
    dep, h = build_network(ScenarioConfig(n=50, rho=2.0, domain="torus"))
    assert dep.domain.area == pytest.approx(25.0)
    assert dep.domain.shape == "torus" and h.n == 50


def test_sweep_cells_and_seeds():
    spec = SweepSpec(quick(seed=10, replicate_count=2), ("m", (0.0, 1.0)), ("tau", (2.0, 1.0, 0.5)))
    assert spec.cells() == [(0.0, 2.0), (0.0, 1.0), (0.0, 0.5), (1.0, 2.0), (1.0, 1.0), (1.0, 0.5)]
    assert [spec.seed_for(c, r) for c in range(2) for r in range(2)] == [10, 11, 12, 13]
    shared = dataclasses.replace(spec, seed_mode="shared")
    assert [shared.seed_for(c, r) for c in range(3) for r in range(2)] == [10, 11] * 3
    cfg = spec.config_for((1.0, 0.5), 99)
    assert (cfg.game.m, cfg.game.tau, cfg.seed) == (1.0, 0.5, 99)


@pytest.mark.parametrize(
    "axis1,axis2",
    [(("m", ()), None), (("m", (1.0, 1.0)), None), (("m", (0.0, 2.0, 1.0)), None), (("x", (1.0,)), None),
     (("m", (1.0,)), ("m", (2.0,)))],
)
def test_sweep_spec_validation(axis1, axis2):
    with pytest.raises(ValueError):
        SweepSpec(ScenarioConfig(), axis1, axis2)


def test_run_scenario_summary():
    rec, s = run_scenario(quick())
    assert s.initial_mean_degree == 35.0
    assert rec.coop_mean_degree[0] == 35.0
    assert s.steps == 400 and not s.converged
    assert s.t == pytest.approx(0.4)
    assert s.analytic_mean_degree == pytest.approx(2 * math.pi * math.sqrt(math.pi))
    d = s.to_dict()
    assert "state" not in d and set(d["assortativity"]) <= {"value", "reason"}


def test_run_sweep_rows_and_determinism():
    spec = SweepSpec(quick(n=12, replicate_count=2), ("m", (0.0, 2.0)), ("mu", (0.5, 1.0)))
    rows = run_sweep(spec)
    assert len(rows) == 8
    assert [(r.axis1, r.axis2, r.replicate) for r in rows[:3]] == [(0.0, 0.5, 0), (0.0, 0.5, 1), (0.0, 1.0, 0)]
    assert sweep_csv(rows) == sweep_csv(run_sweep(spec))
    assert sweep_csv(run_sweep(spec, workers=2)) == sweep_csv(rows)


def test_sweep_csv_format():
    spec = SweepSpec(quick(n=10, replicate_count=1), ("eta", (2.0, 3.0)))
    text = sweep_csv(run_sweep(spec))
    assert "\r" not in text
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == SWEEP_HEADER
    assert rows[1][1] == "NA" and rows[1][8] in ("true", "false") and rows[1][9] == ""
    # 17 significant digits reproduce the double exactly
    assert float(rows[1][4]) == run_sweep(spec)[0].mean_degree


def test_sweep_records_faults(monkeypatch):
    def boom(cfg, observer=None):
        raise IntegrationFault("non-finite rate", (1, 2), 7)

    monkeypatch.setattr(experiments, "run_scenario", boom)
    rows = run_sweep(SweepSpec(quick(replicate_count=1), ("m", (1.0,))))
    assert rows[0].error and rows[0].mean_degree is None and rows[0].steps == 7
    assert "NA" in sweep_csv(rows).splitlines()[1]


def test_summarize_sweep():
    spec = SweepSpec(quick(n=10, replicate_count=3), ("m", (0.0, 1.0)))
    rows = run_sweep(spec)
    summ = summarize_sweep(rows)
    assert [s["axis1"] for s in summ] == [0.0, 1.0]
    degs = [r.mean_degree for r in rows[:3]]
    assert summ[0]["mean_degree_mean"] == pytest.approx(np.mean(degs))
    assert summ[0]["mean_degree_sd"] == pytest.approx(np.std(degs, ddof=1))
    assert summ[0]["replicates"] == 3


def test_tragedy_requires_zero_m():
    with pytest.raises(ValueError):
        tragedy_regression(ScenarioConfig())


def test_tragedy_small_network_passes():
    cfg = ScenarioConfig(
        n=10, rho=4.0, game=GameParams(m=0.0), integrator=IntegratorConfig(s=1e-2, max_steps=2_000_000)
    )
    rep = tragedy_regression(cfg)
    assert rep.passed, rep.failures
    assert rep.max_final_weight < 1e-6 and rep.first_violating_step is None
    # the last surviving weight decays at the slowest pair's rate
    assert rep.measured_decay_rate == pytest.approx(rep.slowest_pair_rate, rel=0.05)
    forced = tragedy_regression(dataclasses.replace(cfg, game=GameParams(m=2.0)), force_zero_m=True)
    assert forced.to_dict() == rep.to_dict()


def test_tragedy_reports_step_budget_failure():
    cfg = ScenarioConfig(n=10, game=GameParams(m=0.0), integrator=IntegratorConfig(s=1e-2, max_steps=50))
    rep = tragedy_regression(cfg)
    assert not rep.passed and any("converge" in f for f in rep.failures)


def test_fast_decay_plateau_synthetic():
    rec = TrajectoryRecord()
    for t, k in enumerate([35, 35, 34, 20, 12, 11.5, 11.2, 11.0, 9.0]):
        rec.append(t, k, None, 0.0, 0.0, 0)
    # steepest drop 14 (34 -> 20); next drop 8 is still large, then 0.5 < 1.4
    assert fast_decay_plateau(rec) == (4.0, 12.0)
    flat = TrajectoryRecord()
    for t in range(3):
        flat.append(t, 5.0, None, 0.0, 0.0, 0)
    with pytest.raises(ValueError):
        fast_decay_plateau(flat)


def test_one_by_one_sweep_equals_run_scenario():
    base = quick(n=12, replicate_count=1, seed=5)
    row = run_sweep(SweepSpec(base, ("tau", (0.7,))))[0]
    _, s = run_scenario(base.with_param("tau", 0.7))
    assert row.seed == s.seed == 5
    assert (row.mean_degree, row.assortativity, row.total_payoff, row.steps, row.converged) == (
        s.mean_degree, s.assortativity.value, s.total_payoff, s.steps, s.converged
    )


def test_tragedy_two_node_decay_rate():
    cfg = ScenarioConfig(n=2, rho=1.0, seed=3, game=GameParams(m=0.0), integrator=IntegratorConfig(s=1e-3))
    rep = tragedy_regression(cfg)
    _, h = build_network(cfg)
    assert rep.passed
    assert rep.measured_decay_rate == pytest.approx(2 * (1 - h.h[0, 1]) ** 2, rel=0.05)


def test_tragedy_hard_disk_excludes_connected_pairs():
    cfg = ScenarioConfig(
        n=12, rho=2.0, channel=ChannelParams(eta=math.inf, eps=0.0, r0=1.0), game=GameParams(m=0.0),
        integrator=IntegratorConfig(s=1e-2),
    )
    _, h = build_network(cfg)
    linked = int(np.sum(np.triu(h.h == 1.0, 1)))
    rep = tragedy_regression(cfg)
    assert linked > 0 and rep.excluded_pairs == linked
    assert rep.passed
