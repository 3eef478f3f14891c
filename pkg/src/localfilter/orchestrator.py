"""Time loop over subdomain workers: localized filter, global filter, forward model.

Each step assembles the subdomain systems at the half step, advances every
Riccati matrix (independent of interface data, so these run concurrently),
then sweeps the subdomains in upwind order, feeding each one the latest
inflow data of its neighbours.  The sweep is repeated until the data consumed
by every subdomain stops changing.
"""
from __future__ import annotations

import math
import time
import warnings
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .config import RunConfig
from .decomposition import extract_boundary, interface_jumps, partition
from .errors import ConfigError, NonConvergenceWarning, StaleBoundaryError
from .filter import (FilterState, ObservationFrame, UncertaintySpec, initial_riccati,
                     make_pseudo_observations, mass_factor, prepare_filter, riccati_step)
from .metrics import spatial_norm, stitch
from .scenarios import gaussian_truth, synth_observations

PHASES = ("assembly", "riccati", "filter", "exchange", "reduction")


@dataclass
class StepRecord:
    step: int
    time: float
    spatial_norm: float
    spatial_error: float
    schwarz_iters: int
    probe_est: float
    probe_truth: float
    probe_bound: float
    assembly_ms: float = 0.0
    riccati_ms: float = 0.0
    filter_ms: float = 0.0
    exchange_ms: float = 0.0
    truth_norm: float = 0.0
    error_norm: float = 0.0
    interface_jump: float = 0.0
    schwarz_residual: float = 0.0


@dataclass
class RunResult:
    config: RunConfig
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    timings: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    nonconverged_steps: list = field(default_factory=list)
    final_fields: dict = field(default_factory=dict)
    topology: object = None
    probe_node: int = -1

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def estimation_error(self) -> float:
        from .metrics import estimation_error
        return estimation_error(self.series("error_norm"), self.series("truth_norm"),
                                self.config.h)


class SubdomainWorker:
    """Matrices and filter state owned by one subdomain."""

    def __init__(self, sub, cfg: RunConfig, spec: UncertaintySpec, observed: bool,
                 use_filter: bool, pseudo: bool):
        self.sub = sub
        self.mesh = sub.mesh
        self.free = sub.free_nodes
        self.cfg = cfg
        self.spec = spec
        self.observed = observed
        self.pseudo = pseudo and not observed
        self.use_filter = use_filter
        self.mass = fem.assemble_mass(self.mesh)
        self.mf = self.mass[np.ix_(self.free, self.free)]
        self.mass_lu = mass_factor(self.mf) if use_filter else None
        self._probe_col = {}
        n = self.mesh.n_nodes
        self.real_mask = np.full(n, observed)
        self.cls = None
        self.sf = None
        self.couplings = {}
        self._assembled_at = None
        self.state = FilterState(np.zeros(n), initial_riccati(self.mf, spec) if use_filter
                                 else np.zeros((0, 0)))
        self.op = None
        self.p_next = None

    def assemble(self, t_mid: float):
        if self._assembled_at is not None and self.cfg.flow.is_constant:
            return
        cfg = self.cfg
        cls = fem.classify_boundary(self.mesh, self.sub.interface_sides, cfg.flow, t_mid)
        blocks = fem.assemble_stiffness(self.mesh, cls, cfg.flow, cfg.eps, t_mid, cfg.flux)
        self.cls = cls
        self.sf = blocks.total[np.ix_(self.free, self.free)]
        self.couplings = {}
        for side, iface in cls.interface_sides.items():
            if cls.inflow_edges[side].any():
                c = fem.inflow_coupling(self.mesh, cls, side, cfg.flow, t_mid, cfg.flux)
                self.couplings[iface] = (side, c[np.ix_(self.free, self.mesh.side_nodes(side))])
        self._assembled_at = t_mid

    def pseudo_mask(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_nodes, dtype=bool)
        if self.pseudo:
            mask[self.cls.d_in] = True
        return mask

    def advance_riccati(self, factorize: bool = True):
        """Riccati step and factorization of the filter system for this step."""
        cfg = self.cfg
        if not self.use_filter:
            if self.op is not None and cfg.flow.is_constant:
                return
            self.op = prepare_filter(self.mf, self.sf, None, np.zeros(len(self.free), bool),
                                     self.spec, cfg.h)
            return
        p = self.state.p
        self.p_next = riccati_step(p, self.mf, self.sf, self.real_mask[self.free], self.spec,
                                   cfg.h, self.mass_lu)
        if not factorize:
            return
        pmask = self.pseudo_mask()[self.free]
        spec = self.spec
        if cfg.pseudo_r is not None and pmask.any():
            spec = replace(spec, r=np.where(pmask, cfg.pseudo_r, spec.diag("r", len(pmask))))
        self.op = prepare_filter(self.mf, self.sf, 0.5 * (p + self.p_next),
                                 self.real_mask[self.free] | pmask, spec, cfg.h, self.mass_lu)

    def solve(self, boundary: dict, y_mid: np.ndarray | None) -> np.ndarray:
        """New nodal field from midpoint boundary data ``{iface: values}``."""
        f = np.zeros(len(self.free))
        for iface, (side, c) in self.couplings.items():
            if iface not in boundary:
                raise StaleBoundaryError(f"subdomain {self.sub.id}: no data on interface {iface}")
            f += c @ boundary[iface]
        y = None
        if self.use_filter:
            y = np.zeros(self.mesh.n_nodes)
            if self.observed:
                y = y_mid
            elif self.pseudo and self.couplings:
                base = ObservationFrame.empty(self.mesh.n_nodes)
                y = make_pseudo_observations(self.mesh, self.cls, boundary, base).y
            y = y[self.free]
        out = np.zeros(self.mesh.n_nodes)
        out[self.free] = self.op.solve(self.state.u_hat[self.free], f, y)
        return out

    def bound(self, local_node: int) -> float:
        if not self.use_filter:
            return 0.0
        k = np.searchsorted(self.free, local_node)
        if k >= len(self.free) or self.free[k] != local_node:
            return 0.0
        if k not in self._probe_col:
            e = np.zeros(len(self.free))
            e[k] = 1.0
            self._probe_col[k] = self.mass_lu.solve(e)
        return float(math.sqrt(max(self.state.p[k] @ self._probe_col[k], 0.0)))


def monolithic(cfg: RunConfig) -> RunConfig:
    """The same global mesh as a single subdomain."""
    return replace(cfg, sx=1, sy=1, ex=cfg.sx * cfg.ex, ey=cfg.sy * cfg.ey, observed=())


def _gamma(cfg: RunConfig, area: float, reinit: float) -> float:
    if cfg.gamma is not None:
        return cfg.gamma
    if reinit > 0:
        return 1.0 + reinit
    return (cfg.horizon + 1.0) * area


def _clock(sink: dict):
    @contextmanager
    def timed(phase):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            sink[phase] = sink.get(phase, 0.0) + time.perf_counter() - t0
    return timed


def _run(cfg: RunConfig, mode: str, progress=None) -> RunResult:
    topo_cfg = cfg
    obs_topology = partition(cfg.rect, cfg.sx, cfg.sy, (cfg.ex, cfg.ey))
    if mode == "global":
        topo_cfg = monolithic(cfg)
    topology = partition(topo_cfg.rect, topo_cfg.sx, topo_cfg.sy, (topo_cfg.ex, topo_cfg.ey))
    use_filter = mode != "forward"
    reinit = cfg.reinit_window if mode == "localized" else 0.0
    pseudo = cfg.pseudo_obs and mode == "localized"
    window_steps = int(round(reinit / cfg.h)) if reinit > 0 else 0

    workers = []
    for s in topology.subdomains:
        spec = UncertaintySpec(cfg.q0, cfg.q, cfg.r, _gamma(cfg, s.area, reinit))
        if reinit > 0 and s.area > 1.0 + 1e-12:
            warnings.warn(f"subdomain {s.id} has measure {s.area:g} > 1 with reinitialization",
                          RuntimeWarning, stacklevel=3)
        observed = (s.id in cfg.observed) if mode != "global" else False
        workers.append(SubdomainWorker(s, cfg, spec, observed, use_filter, pseudo))
    global_mask = None
    if mode == "global" and cfg.observed:
        gmask = np.zeros(topology.global_n_nodes, dtype=bool)
        for sid in cfg.observed:
            gmask[obs_topology.subdomains[sid].global_nodes] = True
        global_mask = gmask
        w = workers[0]
        w.observed = True
        w.real_mask = gmask[w.sub.global_nodes]

    gnodes = topology.global_mesh.nodes
    truth_at = lambda t: gaussian_truth(cfg.truth, gnodes[:, 0], gnodes[:, 1], t)
    if mode == "forward":
        u0 = truth_at(0.0)
        for w in workers:
            w.state.u_hat[w.free] = u0[w.sub.global_nodes][w.free]

    probe = topology.global_mesh.nearest_node(*cfg.probe)
    owner, owner_local = None, None
    for w in workers:
        hit = np.nonzero(w.sub.global_nodes == probe)[0]
        if hit.size and hit[0] in set(w.free.tolist()):
            owner, owner_local = w, int(hit[0])
            break

    result = RunResult(cfg, topology=topology, probe_node=int(probe))
    timings = result.timings
    clock = _clock(timings)
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    mapper = pool.map if pool is not None else map

    def observe(step):
        if not use_filter or not cfg.observed:
            return None
        frames = synth_observations(cfg.truth, obs_topology, cfg.observed, step, cfg.h,
                                    cfg.seed, cfg.noise)
        if mode == "global":
            acc = np.zeros(topology.global_n_nodes)
            cnt = np.zeros(topology.global_n_nodes)
            for sid in cfg.observed:
                s = obs_topology.subdomains[sid]
                acc[s.global_nodes] += frames[sid].y
                cnt[s.global_nodes] += 1
            return {0: np.where(global_mask, acc / np.maximum(cnt, 1), 0.0)}
        return {sid: frames[sid].y for sid in cfg.observed}

    def record(step, iters, phase_ms, jump=0.0, resid=0.0):
        t = step * cfg.h
        fields = {w.sub.id: w.state.u_hat for w in workers}
        u = stitch(topology, fields)
        a = truth_at(t)
        mass = _global_mass(topology) if cfg.mass_weighted else None
        en = spatial_norm(u - a, mass)
        an = spatial_norm(a, mass)
        rec = StepRecord(step, t, spatial_norm(u, mass), en / an if an > 0 else float("nan"),
                         iters, float(u[probe]), float(a[probe]),
                         owner.bound(owner_local) if owner is not None else 0.0,
                         truth_norm=an, error_norm=en, interface_jump=jump,
                         schwarz_residual=resid, **phase_ms)
        result.records.append(rec)
        if cfg.snapshot_every and step % cfg.snapshot_every == 0:
            result.snapshots[step] = (u.copy(), a.copy())
        if progress is not None:
            progress(rec)

    record(0, 0, {})
    y_prev = observe(0)
    order_cache = None
    try:
        for k in range(cfg.steps):
            before = dict(timings)
            t_mid = (k + 0.5) * cfg.h
            with clock("assembly"):
                for w in workers:
                    w.assemble(t_mid)
                y_next = observe(k + 1)
                y_mid = None if y_next is None else {
                    sid: 0.5 * (y_prev[sid] + y_next[sid]) for sid in y_next}
            with clock("riccati"):
                try:
                    list(mapper(SubdomainWorker.advance_riccati, workers))
                except Exception as exc:
                    raise type(exc)(f"step {k}: {exc}") from exc
            if order_cache is None or not cfg.flow.is_constant:
                order_cache = topology.sweep_order(cfg.flow.velocity_at(t_mid))
            iters, resid, ok = _schwarz(workers, topology, order_cache, y_mid, cfg, k, clock)
            if not ok:
                result.nonconverged_steps.append(k + 1)
            with clock("reduction"):
                jumps = interface_jumps([w.state.u_hat for w in workers], topology)
                jump = float(jumps.max()) if jumps.size else 0.0
            if use_filter:
                for w in workers:
                    w.state.p = w.p_next
                    w.state.k = k + 1
                    if window_steps and (k + 1) % window_steps == 0:
                        w.state.p = (1.0 + reinit) * w.state.p
                        w.state.windows += 1
            y_prev = y_next
            phase_ms = {f"{p}_ms": 1e3 * (timings.get(p, 0.0) - before.get(p, 0.0))
                        for p in ("assembly", "riccati", "filter", "exchange")}
            record(k + 1, iters, phase_ms, jump, resid)
    finally:
        if pool is not None:
            pool.shutdown()
    result.final_fields = {w.sub.id: w.state.u_hat.copy() for w in workers}
    return result


def _schwarz(workers, topology, order, y_mid, cfg, k, clock):
    """Gauss-Seidel sweeps in upwind order until inflow data stop changing."""
    old = {w.sub.id: w.state.u_hat for w in workers}
    new = {w.sub.id: w.state.u_hat.copy() for w in workers}
    consumed = {}
    by_id = {w.sub.id: w for w in workers}
    resid = 0.0
    for it in range(1, cfg.schwarz_max_iter + 1):
        for sid in order:
            w = by_id[sid]
            with clock("exchange"):
                boundary = {}
                for iface in w.couplings:
                    f = topology.interfaces[iface]
                    j = f.other(sid)
                    a = extract_boundary(topology, j, old[j], iface, k, it)
                    b = extract_boundary(topology, j, new[j], iface, k + 1, it)
                    boundary[iface] = 0.5 * (a.values + b.values)
                consumed[sid] = boundary
            with clock("filter"):
                y = None if y_mid is None else y_mid.get(0 if len(workers) == 1 else sid)
                new[sid] = w.solve(boundary, y)
        with clock("reduction"):
            resid = 0.0
            for sid, boundary in consumed.items():
                for iface, g in boundary.items():
                    f = topology.interfaces[iface]
                    j = f.other(sid)
                    nodes = f.nodes_of(j)
                    cur = 0.5 * (old[j][nodes] + new[j][nodes])
                    resid = max(resid, float(np.sqrt(np.mean((cur - g) ** 2))))
            scale = math.sqrt(sum(float(v @ v) for v in new.values())
                              / max(1, sum(v.size for v in new.values())))
        if resid <= cfg.schwarz_tol * max(scale, 1e-300):
            converged = True
            break
    else:
        converged = False
        warnings.warn(f"Schwarz loop did not converge at step {k} (residual {resid:.3e})",
                      NonConvergenceWarning, stacklevel=3)
    for w in workers:
        w.state.u_hat = new[w.sub.id]
    return it, resid, converged


_MASS_CACHE = {}


def _global_mass(topology):
    import scipy.sparse as sp

    key = id(topology)
    if key not in _MASS_CACHE:
        mesh = topology.global_mesh
        me = fem.element_mass(mesh.hx, mesh.hy)
        e = mesh.elements
        rows = np.repeat(e, 4, axis=1).ravel()
        cols = np.tile(e, (1, 4)).ravel()
        vals = np.tile(me.ravel(), mesh.n_elements)
        _MASS_CACHE.clear()
        _MASS_CACHE[key] = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return _MASS_CACHE[key]


def run_localized(cfg: RunConfig, progress=None) -> RunResult:
    if cfg.mode != "localized":
        raise ConfigError(f"run_localized needs mode 'localized', got {cfg.mode!r}")
    return _run(cfg, "localized", progress)


def run_global(cfg: RunConfig, progress=None) -> RunResult:
    """Single filter on the whole mesh, no reinitialization, no pseudo-observations."""
    if cfg.mode != "global":
        raise ConfigError(f"run_global needs mode 'global', got {cfg.mode!r}")
    return _run(cfg, "global", progress)


def run_forward(cfg: RunConfig, progress=None) -> RunResult:
    """Open-loop midpoint integration from the exact initial field."""
    if cfg.mode != "forward":
        raise ConfigError(f"run_forward needs mode 'forward', got {cfg.mode!r}")
    return _run(cfg, "forward", progress)


def run(cfg: RunConfig, progress=None) -> RunResult:
    return {"localized": run_localized, "global": run_global,
            "forward": run_forward}[cfg.mode](cfg, progress)


def probe_bound_trace(cfg: RunConfig, progress=None) -> np.ndarray:
    """Probe pointwise bound at every step of a localized run, from the Riccati part alone.

    ``P`` does not depend on the data, so only the subdomain owning the probe
    is stepped and the result equals the ``probe_bound`` series of ``run``.
    """
    if cfg.mode != "localized":
        raise ConfigError(f"probe_bound_trace needs mode 'localized', got {cfg.mode!r}")
    topology = partition(cfg.rect, cfg.sx, cfg.sy, (cfg.ex, cfg.ey))
    probe = topology.global_mesh.nearest_node(*cfg.probe)
    reinit = cfg.reinit_window
    window_steps = int(round(reinit / cfg.h)) if reinit > 0 else 0
    for s in topology.subdomains:
        hit = np.nonzero(s.global_nodes[s.free_nodes] == probe)[0]
        if hit.size:
            break
    else:
        return np.zeros(cfg.steps + 1)
    spec = UncertaintySpec(cfg.q0, cfg.q, cfg.r, _gamma(cfg, s.area, reinit))
    w = SubdomainWorker(s, cfg, spec, s.id in cfg.observed, True, cfg.pseudo_obs)
    local = int(s.free_nodes[hit[0]])
    out = [w.bound(local)]
    for k in range(cfg.steps):
        w.assemble((k + 0.5) * cfg.h)
        w.advance_riccati(factorize=False)
        w.state.p = w.p_next
        if window_steps and (k + 1) % window_steps == 0:
            w.state.p = (1.0 + reinit) * w.state.p
        out.append(w.bound(local))
        if progress is not None:
            progress(k + 1, out[-1])
    return np.array(out)


def _grid_for(n: int) -> tuple[int, int]:
    """Most nearly square ``sx * sy = n`` factorization, wider than tall."""
    best = (n, 1)
    for sy in range(1, int(math.isqrt(n)) + 1):
        if n % sy == 0:
            best = (n // sy, sy)
    return best


def model_cost_ratio(n_sub: int, p: int = 1) -> float:
    """Global over localized cost for ``n_sub`` equal subdomains and ``p`` Schwarz sweeps."""
    return 13.0 * n_sub ** 3 / ((p + 12.0) * n_sub)


def bench_scaling(template: RunConfig, counts, steps: int = 5) -> list[dict]:
    """Per-step phase timings of short localized runs with 1x1 subdomains.

    The first part is a weak-scaling sweep (fixed subdomain size, growing
    count); the last two rows compare localized and global filters on the
    template's own mesh.
    """
    rows = []
    base = replace(template, steps=steps, snapshot_every=0, out_dir="")
    for n in counts:
        sx, sy = _grid_for(int(n))
        x0, y0 = base.rect[:2]
        cfg = replace(base, mode="localized", sx=sx, sy=sy, rect=(x0, y0, x0 + sx, y0 + sy),
                      observed=tuple(i for i in base.observed if i < sx * sy),
                      probe=(x0 + 0.5, y0 + 0.5))
        rows.append(_bench_row(f"weak N={n}", cfg))
    for mode in ("localized", "global"):
        rows.append(_bench_row(f"{mode} N={base.sx * base.sy}", replace(base, mode=mode)))
    loc, glo = rows[-2], rows[-1]
    speedup = glo["step_ms"] / loc["step_ms"] if loc["step_ms"] > 0 else float("inf")
    for r in rows:
        r["model_ratio"] = ""
        r["speedup"] = ""
    glo["model_ratio"] = round(model_cost_ratio(base.sx * base.sy), 2)
    glo["speedup"] = round(speedup, 2)
    return rows


def _bench_row(label: str, cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    res = run(cfg)
    wall = time.perf_counter() - t0
    per = {f"{p}_ms": 1e3 * res.timings.get(p, 0.0) / cfg.steps for p in PHASES}
    return {"label": label, "subdomains": cfg.sx * cfg.sy, "nodes": res.topology.global_n_nodes,
            "steps": cfg.steps, "step_ms": 1e3 * wall / cfg.steps, **per}
