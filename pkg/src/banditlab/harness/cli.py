"""``banditlab`` command line: run, sweep, diagnose, plot.

Exit status is 0 on success, 2 for configuration errors, 3 for numerical
failures and 1 for anything else (e.g. unwritable output).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_seeds
from .outputs import emit_outputs, plot_directory, write_diagnostics
from .runner import NumericalFailure, run_experiment, summarize
from .sweep import PAPER_SWEEPS, design_diagnostics, parse_param, sweep, trace_diagnostics, write_sweep

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("banditlab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _with_overrides(cfg, args):
    if getattr(args, "algo", None):
        cfg = cfg.select(args.algo)
    changes = {}
    if getattr(args, "seeds", None):
        changes["seeds"] = parse_seeds(args.seeds)
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if getattr(args, "n", None) is not None:
        changes["instance"] = dataclasses.replace(cfg.instance, n=args.n)
    if changes:
        # rebuild through the constructor so validation runs again
        fields = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
        fields.update(changes)
        cfg = type(cfg)(**fields)
    return cfg


def cmd_run(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    result = run_experiment(cfg)
    diags = trace_diagnostics(result) if cfg.diagnostics else None
    paths = emit_outputs(result, diagnostics=diags, svg=not args.no_svg)
    for name in cfg.algorithm_names:
        s = summarize(result.traces_for(name))
        print(f"{name:12s} R({cfg.instance.n}) = {s.final:.4f} +- {s.stderr[-1]:.4f}")
    log.info("wrote %d files to %s", len(paths), cfg.output_dir)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    grid: dict = {}
    sample: dict = {}
    default_alg = cfg.algorithm_names[0] if len(cfg.algorithm_names) == 1 else None
    for spec in args.param or []:
        alg, name, rng = parse_param(spec, default_alg)
        grid.setdefault(alg, {})[name] = rng
    if args.sample is not None:
        sample = {alg: args.sample for alg in grid}
    if not grid:
        # fall back to the published tuning ranges of the configured algorithms
        for alg in cfg.algorithm_names:
            if alg in PAPER_SWEEPS:
                grid[alg], sample[alg] = PAPER_SWEEPS[alg]
    if not grid:
        raise ConfigError("nothing to sweep: pass --param or configure alexp/etc/ets")
    ranking = sweep(cfg, grid, sample, sample_seed=args.sample_seed)
    write_sweep(ranking, cfg.output_dir)
    for alg, entries in ranking.items():
        best = entries[0]
        shown = {k: best.params[k] for k in sorted(grid[alg])}
        print(f"{alg:12s} best {shown} R({cfg.instance.n}) = {best.mean_final:.4f}"
              f" +- {best.stderr_final:.4f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    rows = design_diagnostics(cfg, s=args.s, restarts=args.restarts)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_diagnostics(rows, out)
    for _, seed, report, cmin in rows:
        print(f"seed {seed:3d} kappa_hat(s={report.s}) = {report.kappa_hat:.5g}"
              f" lambda_min = {report.lambda_min_empirical:.3g} cmin_uniform = {cmin:.3g}")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = plot_directory(args.out)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="banditlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="INI experiment file")
            p.add_argument("--seeds", help="e.g. 0..19 or 1,2,3")
            p.add_argument("-n", type=int, dest="n", help="override the horizon")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="run algorithms over seeds and write CSVs")
    common(p)
    p.add_argument("--algo", action="append", help="algorithm to run (repeatable)")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="rank hyperparameter configurations by mean R(n)")
    common(p)
    p.add_argument("--param", action="append", help="[alg.]name=lo:hi:k[:log] (repeatable)")
    p.add_argument("--sample", type=int, help="draw this many random configs instead of the grid")
    p.add_argument("--sample-seed", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="restricted-eigenvalue report for uniform exploration")
    common(p)
    p.add_argument("--s", type=int, default=1, help="support size for kappa")
    p.add_argument("--restarts", type=int, default=8)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("plot", help="redraw summary.svg from regret CSVs")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"banditlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "plot" and not args.out:
        print("banditlab: config error: plot needs --out", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"banditlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"banditlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"banditlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
