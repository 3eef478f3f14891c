"""CSV, snapshot and summary output, and comparison of finished runs."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import save_config

METRIC_COLUMNS = ("step", "time", "spatial_norm", "spatial_error", "schwarz_iters", "probe_est",
                  "probe_truth", "probe_bound", "assembly_ms", "riccati_ms", "filter_ms",
                  "exchange_ms")


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_metrics(result, path, timings: bool = True) -> Path:
    """``metrics.csv`` with the fixed column set; floats written round-trip exact.

    ``timings=False`` writes zeros in the timing columns, which makes files
    from repeated runs byte-comparable.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in result.records:
            row = []
            for c in METRIC_COLUMNS:
                v = getattr(r, c)
                if c.endswith("_ms") and not timings:
                    v = 0.0
                row.append(_cell(v))
            w.writerow(row)
    return path


def read_metrics(path) -> dict:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]} if rows else {}


def write_snapshots(result, out_dir) -> list[Path]:
    """One ``x,y,estimate,truth`` CSV per stored snapshot."""
    out_dir = Path(out_dir)
    nodes = result.topology.global_mesh.nodes
    paths = []
    for step, (u, a) in sorted(result.snapshots.items()):
        p = out_dir / f"snapshot_{step:05d}.csv"
        np.savetxt(p, np.column_stack([nodes, u, a]), delimiter=",",
                   header="x,y,estimate,truth", comments="", fmt="%.10g")
        paths.append(p)
    return paths


def summary_text(result) -> str:
    cfg = result.config
    it = result.series("schwarz_iters")[1:]
    lines = [
        f"name = {cfg.name}",
        f"mode = {cfg.mode}",
        f"subdomains = {cfg.sx} x {cfg.sy}",
        f"elements_per_subdomain = {cfg.ex} x {cfg.ey}",
        f"steps = {cfg.steps}",
        f"h = {cfg.h!r}",
        f"seed = {cfg.seed}",
        f"estimation_error = {result.estimation_error!r}",
        f"final_spatial_error = {result.records[-1].spatial_error!r}",
        f"mean_schwarz_iters = {float(it.mean()) if it.size else 0.0!r}",
        f"max_schwarz_iters = {int(it.max()) if it.size else 0}",
        f"nonconverged_steps = {len(result.nonconverged_steps)}",
    ]
    for phase, sec in result.timings.items():
        lines.append(f"time_{phase}_s = {sec:.3f}")
    lines.append(f"time_total_s = {sum(result.timings.values()):.3f}")
    return "\n".join(lines) + "\n"


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def save_result(result, out_dir, timings: bool = True) -> dict:
    """Write config.ini, metrics.csv, summary.txt and any snapshots to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(result.config, out / "config.ini")
    paths = {"metrics": write_metrics(result, out / "metrics.csv", timings)}
    p = out / "summary.txt"
    p.write_text(summary_text(result))
    paths["summary"] = p
    paths["snapshots"] = write_snapshots(result, out)
    return paths


def compare(dir_a, dir_b) -> str:
    """Text report of estimation errors and their ratio for two run directories."""
    a = read_summary(Path(dir_a) / "summary.txt")
    b = read_summary(Path(dir_b) / "summary.txt")
    ea, eb = float(a["estimation_error"]), float(b["estimation_error"])
    ma, mb = read_metrics(Path(dir_a) / "metrics.csv"), read_metrics(Path(dir_b) / "metrics.csv")
    lines = [f"a: {dir_a} ({a.get('mode')}) estimation_error = {ea:.4f}",
             f"b: {dir_b} ({b.get('mode')}) estimation_error = {eb:.4f}",
             f"ratio a/b = {ea / eb if eb else float('inf'):.4f}"]
    n = min(len(ma.get("step", [])), len(mb.get("step", [])))
    if n:
        d = ma["spatial_error"][:n] - mb["spatial_error"][:n]
        lines.append(f"spatial_error a-b: mean {d.mean():+.4f}, max {d.max():+.4f}, "
                     f"min {d.min():+.4f} over {n} records")
    return "\n".join(lines) + "\n"


def write_bench(rows, path) -> Path:
    path = Path(path)
    cols = list(rows[0].keys())
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.3f}" if isinstance(v, float) else v) for k, v in r.items()})
    return path


def format_bench(rows) -> str:
    cols = ["label", "subdomains", "nodes", "step_ms", "assembly_ms", "riccati_ms", "filter_ms",
            "exchange_ms", "model_ratio", "speedup"]
    out = ["  ".join(f"{c:>12}" for c in cols)]
    for r in rows:
        out.append("  ".join(f"{r[c]:>12.2f}" if isinstance(r[c], float) else f"{str(r[c]):>12}"
                             for c in cols))
    return "\n".join(out) + "\n"
