"""Command line entry point: ``topomulti run | sweep | compare | gradcheck``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import gradcheck as gc
from .artifacts import emit_artifacts
from .config import ConfigError, RunConfig, format_config, load_config
from .fem import StructuredGrid
from .interpolation import SchemeKind
from .problem import OptimizationError, run_optimization

log = logging.getLogger("topomulti")


def execute(cfg: RunConfig, outdir=None, verbose=False):
    """Run one configuration and write its artifacts. Returns (design, history, outdir)."""
    outdir = Path(outdir or cfg.output)
    spec, opt = cfg.to_problem(), cfg.to_optimization()

    def report(record, _ev):
        if verbose:
            vols = " ".join(f"{v:.4f}" for v in record.volumes)
            beta = "" if record.beta is None else f" beta {record.beta:g}"
            print(f"it {record.iteration:4d}  c {record.compliance:.6f}  V {vols}  change {record.change:.4f}{beta}",
                  flush=True)

    design, history = run_optimization(spec, opt, callback=report)
    grid = StructuredGrid(spec.nelx, spec.nely, spec.elem_size)
    emit_artifacts(history, design, grid, outdir, scheme=opt.scheme, vtk=cfg.vtk)
    (outdir / "config.cfg").write_text(format_config(cfg), encoding="utf-8")
    return design, history, outdir


def _summary_row(history):
    last = history[-1]
    def num(v):
        return repr(float(v))

    return [num(last.compliance), *map(num, last.volumes), *map(num, last.grayness), last.iteration]


def _summary_header(nm):
    return (["compliance"] + [f"V_{i}" for i in range(1, nm + 1)]
            + [f"grayness_{i}" for i in range(1, nm + 1)] + ["iterations"])


def _run_job(args):
    cfg, outdir = args
    _, history, _ = execute(cfg, outdir)
    return _summary_row(history)


def _map(jobs, n_jobs):
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def cmd_run(args):
    cfg = load_config(args.config)
    _, history, outdir = execute(cfg, args.out, verbose=not args.quiet)
    last = history[-1]
    print(f"final compliance {last.compliance:.6f} after {last.iteration} iterations; "
          f"grayness {', '.join(f'{g:.4f}' for g in last.grayness)}")
    print(f"artifacts written to {outdir}")
    return 0


def cmd_sweep(args):
    sep = ";" if ";" in args.values else ","
    values = [v.strip() for v in args.values.split(sep) if v.strip()]
    if not values:
        raise ConfigError("no sweep values given", args.key)
    base = load_config(args.config)
    outroot = Path(args.out or base.output)
    jobs = []
    for value in values:
        cfg = load_config(args.config, overrides={args.key: value})
        jobs.append((cfg, outroot / f"{args.key}={value}"))
    rows = _map(jobs, args.jobs)
    outroot.mkdir(parents=True, exist_ok=True)
    nm = len(jobs[0][0].moduli)
    path = outroot / "sweep.csv"
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([args.key] + _summary_header(nm))
        for value, row in zip(values, rows):
            w.writerow([value] + row)
    for value, row in zip(values, rows):
        print(f"{args.key} = {value:>10}  compliance {float(row[0]):.6f}")
    print(f"summary written to {path}")
    return 0


def cmd_compare(args):
    base = load_config(args.config)
    outroot = Path(args.out or base.output)
    schemes = [s.value for s in SchemeKind]
    jobs = [(base.replace(scheme=s), outroot / s) for s in schemes]
    rows = _map(jobs, args.jobs)
    outroot.mkdir(parents=True, exist_ok=True)
    nm = len(base.moduli)
    path = outroot / "comparison.csv"
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme"] + _summary_header(nm))
        for s, row in zip(schemes, rows):
            w.writerow([s] + row)
    print(f"{'scheme':<15} {'compliance':>11}  grayness")
    for s, row in zip(schemes, rows):
        gray = ", ".join(f"{float(g):.4f}" for g in row[1 + nm: 1 + 2 * nm])
        print(f"{s:<15} {float(row[0]):>11.6f}  {gray}")
    print(f"table written to {path}")
    return 0


def cmd_gradcheck(args):
    failed = 0
    for r in gc.run_all(seed=args.seed):
        status = "ok" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{r.scheme:<15} {r.filter:<12} NM={r.nm}  compliance {r.compliance_error:.2e}  "
              f"volume {r.volume_error:.2e}  filtered {r.filtered_error:.2e}  {status}")
    print("all gradient checks passed" if not failed else f"{failed} gradient checks failed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="topomulti", description="Multi-material compliance topology optimization")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: the config's 'output')")
    p.add_argument("-q", "--quiet", action="store_true", help="no per-iteration lines")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one key over a list of values")
    p.add_argument("config")
    p.add_argument("--key", required=True)
    p.add_argument("--values", required=True, help="comma separated; use ';' between values of list-valued keys")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run every interpolation scheme on one problem")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of all sensitivities")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"topomulti: config error: {exc}", file=sys.stderr)
        return 2
    except OptimizationError as exc:
        print(f"topomulti: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"topomulti: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
