"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 Schwarz non-convergence when ``--strict`` is given.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .config import MODES, load_config, save_config
from .errors import ConfigError, NonConvergenceWarning, NumericalError, StaleBoundaryError
from .orchestrator import bench_scaling, run
from .report import compare, format_bench, save_result, write_bench
from .scenarios import experiment_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", help="output directory (default: from config or ./out-<name>)")
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--strict", action="store_true",
                   help="exit with code 3 if any Schwarz loop hit its iteration cap")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--no-timings", action="store_true",
                   help="write zeros in the timing columns of metrics.csv (byte-comparable runs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="localfilter",
                                 description="Localized minimax filtering for advection-diffusion")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run from a config file")
    r.add_argument("--config", required=True)
    _common(r)
    e = sub.add_parser("experiment", help="run a canned experiment")
    e.add_argument("--id", type=int, required=True, choices=(1, 2))
    e.add_argument("--desk", action="store_true", help="reduced-size variant")
    e.add_argument("--dump-config", help="write the experiment config to this file and exit")
    e.add_argument("--reinit-window", type=float)
    e.add_argument("--elements", type=int, help="elements per subdomain side")
    e.add_argument("--sigma-rate", type=float, help="growth rate of the plume width")
    e.add_argument("--no-pseudo", action="store_true",
                   help="do not use inflow data as observations on sensorless subdomains")
    e.add_argument("--pseudo-r", type=float, help="weight of pseudo-observations (default: r)")
    _common(e)
    b = sub.add_parser("bench", help="weak-scaling sweep and localized vs global timing")
    b.add_argument("--subdomains", default="1,2,4,9")
    b.add_argument("--steps", type=int, default=5)
    b.add_argument("--elements", type=int, default=15)
    b.add_argument("--out")
    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    return ap


def _apply_overrides(cfg, args):
    kw = {}
    for name in ("mode", "seed", "workers", "steps"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if getattr(args, "snapshot_every", None) is not None:
        kw["snapshot_every"] = args.snapshot_every
    if getattr(args, "reinit_window", None) is not None:
        kw["reinit_window"] = args.reinit_window
    if getattr(args, "elements", None) is not None:
        kw["ex"] = kw["ey"] = args.elements
    if getattr(args, "sigma_rate", None) is not None:
        kw["truth"] = replace(cfg.truth, sigma_rate=args.sigma_rate)
    if getattr(args, "no_pseudo", False):
        kw["pseudo_obs"] = False
    if getattr(args, "pseudo_r", None) is not None:
        kw["pseudo_r"] = args.pseudo_r
    return replace(cfg, **kw)


def _execute(cfg, args) -> int:
    out = Path(args.out or cfg.out_dir or f"out-{cfg.name}-{cfg.mode}")

    def progress(rec):
        if not args.quiet and (rec.step % max(1, cfg.steps // 20) == 0):
            print(f"step {rec.step:6d}  t={rec.time:8.2f}  rel.err={rec.spatial_error:.4f}  "
                  f"iters={rec.schwarz_iters}", file=sys.stderr)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        result = run(cfg, progress)
    paths = save_result(result, out, timings=not args.no_timings)
    print(f"{cfg.name} [{cfg.mode}] estimation error {result.estimation_error:.4f}; "
          f"wrote {paths['metrics']} and {paths['summary']}")
    if result.nonconverged_steps:
        print(f"warning: Schwarz loop hit the iteration cap at {len(result.nonconverged_steps)} "
              "steps", file=sys.stderr)
        if args.strict:
            return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _apply_overrides(load_config(args.config), args)
            return _execute(cfg, args)
        if args.command == "experiment":
            cfg = _apply_overrides(experiment_config(args.id, desk=args.desk), args)
            if args.dump_config:
                save_config(cfg, args.dump_config)
                print(f"wrote {args.dump_config}")
                return EXIT_OK
            return _execute(cfg, args)
        if args.command == "bench":
            counts = [int(x) for x in args.subdomains.split(",") if x.strip()]
            tmpl = experiment_config(2)
            tmpl = replace(tmpl, ex=args.elements, ey=args.elements)
            rows = bench_scaling(tmpl, counts, steps=args.steps)
            print(format_bench(rows), end="")
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                print(f"wrote {write_bench(rows, Path(args.out) / 'bench.csv')}")
            return EXIT_OK
        if args.command == "compare":
            print(compare(args.a, args.b), end="")
            return EXIT_OK
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, StaleBoundaryError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
