import math

import numpy as np
import pytest

from localfilter import fem
from localfilter.config import RunConfig
from localfilter.decomposition import SubdomainTopology, partition
from localfilter.errors import ConfigError, NonConvergenceWarning
from localfilter.filter import UncertaintySpec, initial_riccati, riccati_step
from localfilter.flow import FlowField
from localfilter.mesh import build_mesh
from localfilter.orchestrator import (SubdomainWorker, _grid_for, bench_scaling,
                                      model_cost_ratio, monolithic, run, run_global,
                                      run_localized)
from localfilter.scenarios import GaussianTruthParams, gaussian_truth

FLOW = FlowField.constant(0.2, 0.0)


def small(**kw):
    base = dict(name="small", rect=(0.0, 0.0, 2.0, 1.0), sx=2, sy=1, ex=4, ey=4, flow=FLOW,
                eps=1e-3, truth=GaussianTruthParams(0.15, 0.0, 0.5, 0.5, FLOW), q0=0.1, q=0.1,
                r=12.0, reinit_window=0.1, h=0.1, steps=4, observed=(0,), probe=(1.3, 0.4))
    base.update(kw)
    return RunConfig(**base)


def test_forward_single_domain_matches_direct_midpoint():
    cfg = small(mode="forward", sx=1, ex=8, observed=(), steps=6)
    res = run(cfg)
    mesh = build_mesh(8, 4, cfg.rect)
    cls = fem.classify_boundary(mesh, {}, FLOW, 0.0)
    s = fem.assemble_stiffness(mesh, cls, FLOW, cfg.eps, 0.0).total
    m = fem.assemble_mass(mesh)
    boundary = np.unique(np.concatenate([mesh.side_nodes(x) for x in
                                         ("left", "right", "bottom", "top")]))
    free = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
    a = (m - 0.05 * s)[np.ix_(free, free)]
    b = (m + 0.05 * s)[np.ix_(free, free)]
    u = gaussian_truth(cfg.truth, *mesh.nodes.T, 0.0)[free]
    for _ in range(6):
        u = np.linalg.solve(a, b @ u)
    got = res.final_fields[0][free]
    assert np.allclose(got, u, rtol=1e-12, atol=1e-14)


def test_records_and_estimation_error():
    res = run(small())
    assert [r.step for r in res.records] == list(range(5))
    assert res.records[0].time == 0.0 and res.records[-1].time == pytest.approx(0.4)
    e = res.estimation_error
    assert 0 < e < 2
    assert np.all(res.series("truth_norm") > 0)


def test_uniform_flow_needs_one_sweep():
    res = run(small(steps=3))
    assert np.all(res.series("schwarz_iters")[1:] == 1)
    assert not res.nonconverged_steps


def test_deterministic_and_thread_independent():
    a = run(small())
    b = run(small())
    c = run(small(workers=3))
    for name in ("spatial_error", "probe_est", "probe_bound", "interface_jump"):
        assert np.array_equal(a.series(name), b.series(name))
        assert np.array_equal(a.series(name), c.series(name))
    d = run(small(seed=5))
    assert not np.array_equal(a.series("probe_est"), d.series("probe_est"))


def test_pseudo_observations_leave_riccati_untouched():
    cfg = small(steps=3)
    results = {}
    for flag in (True, False):
        res = run(cfg.with_(pseudo_obs=flag))
        results[flag] = res
    assert np.array_equal(results[True].series("probe_bound"), results[False].series("probe_bound"))
    assert not np.array_equal(results[True].series("probe_est"),
                              results[False].series("probe_est"))


def test_pseudo_weight():
    cfg = small(steps=3)
    same = run(cfg.with_(pseudo_r=cfg.r)).series("probe_est")
    assert np.array_equal(run(cfg).series("probe_est"), same)
    off = run(cfg.with_(pseudo_obs=False)).series("probe_est")
    np.testing.assert_allclose(run(cfg.with_(pseudo_r=0.0)).series("probe_est"), off,
                               rtol=1e-12, atol=1e-14)
    assert not np.allclose(run(cfg.with_(pseudo_r=1.0)).series("probe_est"), same)


def test_worker_riccati_and_reinit_schedule():
    cfg = small(steps=3, observed=())
    top_sub = partition(cfg.rect, 2, 1, (4, 4)).subdomains[1]
    spec = UncertaintySpec(cfg.q0, cfg.q, cfg.r, 1.1)
    w = SubdomainWorker(top_sub, cfg, spec, observed=False, use_filter=True, pseudo=True)
    w.assemble(0.05)
    p = initial_riccati(w.mf, spec)
    assert np.array_equal(w.state.p, p)
    w.advance_riccati()
    ref = riccati_step(p, w.mf, w.sf, np.zeros(len(w.free), bool), spec, cfg.h)
    assert np.array_equal(w.p_next, ref)
    # the gain includes pseudo-observations on the inflow side
    assert w.op.mask.sum() == np.isin(w.free, w.cls.d_in).sum() > 0


def test_reinitialization_scales_p():
    # no dynamics, no sensors: P grows linearly, then jumps by (1+w) at each window end
    cfg = small(sx=1, ex=4, eps=0.0, flow=FlowField.constant(0.0, 0.0), observed=(),
                steps=2, reinit_window=0.1, pseudo_obs=False,
                truth=GaussianTruthParams(0.15, 0.0, 0.5, 0.5))
    res = run_localized(cfg)
    mesh = build_mesh(4, 4, cfg.rect)
    m = fem.assemble_mass(mesh)
    free = np.setdiff1d(np.arange(25), np.unique(np.concatenate(
        [mesh.side_nodes(s) for s in ("left", "right", "bottom", "top")])))
    mf = m[np.ix_(free, free)]
    g = 1.1
    p = g * 0.1 * mf
    for _ in range(2):
        p = (1.1) * (p + cfg.h * g * 0.1 * mf)
    minv = np.linalg.inv(mf)
    k = np.searchsorted(free, res.probe_node)
    assert res.records[-1].probe_bound == pytest.approx(math.sqrt((p @ minv)[k, k]), rel=1e-10)


def test_global_mode_uses_single_domain():
    cfg = small(mode="global", steps=2)
    res = run_global(cfg)
    assert res.topology.n_subdomains == 1
    assert res.topology.global_n_nodes == 9 * 5
    assert monolithic(cfg).ex == 8


def test_filter_beats_forward_when_fully_observed():
    cfg = small(steps=10, observed=(0, 1), q0=1.0)
    start_off = cfg.with_(truth=GaussianTruthParams(0.15, 0.0, 0.7, 0.5, FLOW))
    loc = run(start_off)
    assert loc.records[-1].spatial_error < loc.records[1].spatial_error


def test_downwind_sweep_iterates_and_reports_cap(monkeypatch):
    monkeypatch.setattr(SubdomainTopology, "sweep_order",
                        lambda self, v: list(range(self.n_subdomains))[::-1])
    cfg = small(steps=2, schwarz_tol=1e-12)
    res = run(cfg)
    assert res.series("schwarz_iters")[1:].min() >= 2 and not res.nonconverged_steps
    with pytest.warns(NonConvergenceWarning):
        capped = run(cfg.with_(schwarz_max_iter=1))
    assert capped.nonconverged_steps == [1, 2]


def test_harmonic_flow_sweeps_converge():
    flow = FlowField.harmonic((0.12, 0.24), (math.pi, math.pi / 2), (0.1, 0.2))
    cfg = small(rect=(0, 0, 2, 2), sx=2, sy=2, flow=flow, steps=3, schwarz_tol=1e-10,
                truth=GaussianTruthParams(0.3, 0.0, 0.8, 0.8, flow))
    res = run(cfg)
    assert not res.nonconverged_steps
    assert np.all(res.series("schwarz_residual")[1:] <= 1e-10 * 10)


def test_mode_checks():
    with pytest.raises(ConfigError):
        run_global(small())
    with pytest.raises(ConfigError):
        run_localized(small(mode="forward"))


def test_measure_warning():
    cfg = small(rect=(0, 0, 4, 2), steps=1)
    with pytest.warns(RuntimeWarning):
        run(cfg)


def test_cost_model_and_grid():
    assert model_cost_ratio(9) == pytest.approx(81.0)
    assert model_cost_ratio(1) == pytest.approx(1.0)
    assert _grid_for(9) == (3, 3) and _grid_for(2) == (2, 1) and _grid_for(6) == (3, 2)


def test_bench_rows():
    from localfilter.scenarios import experiment_config
    tmpl = experiment_config(2).with_(ex=3, ey=3)
    rows = bench_scaling(tmpl, [1, 2], steps=2)
    assert [r["label"] for r in rows] == ["weak N=1", "weak N=2", "localized N=9", "global N=9"]
    assert rows[-1]["model_ratio"] == 81.0 and rows[-1]["speedup"] > 0
    assert all(r["step_ms"] > 0 for r in rows)


def test_probe_bound_trace_equals_full_run():
    from localfilter.orchestrator import probe_bound_trace
    flow = FlowField.harmonic((0.12, 0.24), (math.pi, math.pi / 2), (0.1, 0.2))
    cfg = small(rect=(0, 0, 2, 2), sx=2, sy=2, flow=flow, steps=5, observed=(0,),
                probe=(1.3, 1.4), truth=GaussianTruthParams(0.3, 0.0, 0.8, 0.8, flow))
    res = run(cfg)
    trace = probe_bound_trace(cfg)
    assert np.array_equal(trace, res.series("probe_bound")) and trace[-1] > 0
    with pytest.raises(ConfigError):
        probe_bound_trace(cfg.with_(mode="forward"))
