"""Command-line entry point (``mixshrink``).

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 every replication of some method failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .runner import (
    METHODS,
    ConfigError,
    DataError,
    ExperimentConfig,
    RealDataSpec,
    expand_grid,
    fit_full_data,
    load_config,
    load_csv,
    run_experiment,
    scenario_config_text,
    with_overrides,
)
from .simulation import scenario_catalog

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAILED = 0, 1, 2, 3

logger = logging.getLogger("mixshrink")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _methods(text: str) -> tuple[str, ...]:
    out = tuple(m.strip().upper() for m in text.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return out


def _add_fit_options(p: argparse.ArgumentParser):
    g = p.add_argument_group("estimation")
    g.add_argument("--restarts", type=int, default=9, help="extra random starts (default 9)")
    g.add_argument("--max-iters", type=int, default=500)
    g.add_argument("--tol", type=float, default=1e-6, help="log-likelihood change for convergence")
    g.add_argument("--inner-iters", type=int, default=25, help="IRWLS iterations per M-step")
    g.add_argument("--best-of-trace", action="store_true",
                   help="keep the best SEM iterate instead of the last one")
    g.add_argument("--prediction-rule", choices=("mixture", "max_component"), default="mixture")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixshrink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a simulation cell from the scenario catalog")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--methods", type=_methods, default=METHODS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.add_argument("--fixed-covariates", action="store_true",
                   help="draw the training covariates once and reuse them")
    p.add_argument("--log", action="store_true", help="also write replications.csv")
    _add_fit_options(p)

    p = sub.add_parser("fit", help="fit a CSV dataset, optionally with a train/test study")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--covariates", required=True, help="comma-separated column names")
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--method", type=_methods, default=METHODS,
                   help="one method or a comma-separated list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--reps", type=int, default=0,
                   help="train/test subsampling replications (0 fits the full data only)")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--log", action="store_true", help="also write replications.csv")
    _add_fit_options(p)

    p = sub.add_parser("run", help="run experiments described by config files")
    p.add_argument("configs", nargs="*", help="config files")
    p.add_argument("--grid", help="file listing config paths, one per line")
    p.add_argument("--workers", type=int, help="override n_workers")

    p = sub.add_parser("scenarios", help="list the simulation catalog")
    p.add_argument("--table-only", action="store_true", help="omit alternate phi grids")
    p.add_argument("--write-configs", metavar="DIR",
                   help="write one config per scenario plus grid.txt into DIR")
    return parser


def _fit_kwargs(args) -> dict:
    return dict(n_restarts=args.restarts, max_iters=args.max_iters, loglik_tol=args.tol,
                inner_iters=args.inner_iters, terminal_iterate=not args.best_of_trace,
                prediction_rule=args.prediction_rule)


def _report(outcome) -> int:
    s = outcome.summary
    for m in s.methods:
        crit = s.criteria[m]
        parts = [f"{m:5s} effective {s.n_reps_effective[m]}/{s.n_reps}"]
        for key in ("sqrt_sse_beta", "error"):
            c = crit.get(key)
            if c is not None:
                parts.append(f"{key} {c.median:.4g} [{c.lower:.4g}, {c.upper:.4g}]")
        if s.failures[m]:
            parts.append(f"failures {s.failures[m]}")
        print("  ".join(parts))
    for name, path in outcome.files.items():
        print(f"wrote {name}: {path}")
    return outcome.exit_code


def _cmd_simulate(args) -> int:
    config = ExperimentConfig(
        mode="simulate", scenario=args.scenario, methods=args.methods, n_reps=args.reps,
        n_workers=args.workers, seed=args.seed, out_dir=args.out,
        fixed_covariates=args.fixed_covariates, log_replications=args.log, **_fit_kwargs(args))
    return _report(run_experiment(config))


def _cmd_fit(args) -> int:
    spec = RealDataSpec(args.data, args.response,
                        tuple(c.strip() for c in args.covariates.split(",") if c.strip()),
                        standardize=not args.no_standardize)
    config = ExperimentConfig(
        mode="fit-data", data=spec, components=args.components, methods=args.method,
        n_reps=max(args.reps, 1), n_workers=args.workers, seed=args.seed, out_dir=args.out,
        train_size=args.train_size, test_size=args.test_size, log_replications=args.log,
        **_fit_kwargs(args))
    loaded = load_csv(spec)
    print(f"n = {loaded.n}, p = {loaded.p}")
    for i, a in enumerate(loaded.covariates):
        for j in range(i + 1, len(loaded.covariates)):
            print(f"corr({a}, {loaded.covariates[j]}) = {loaded.correlations[i, j]:.3f}")
    result = fit_full_data(loaded, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "fit.json"
    path.write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    for m, r in result["methods"].items():
        print(f"{m:5s} loglik {r['loglik']:.4f}  {r['termination']}  pi {r['pi']}")
    print(f"wrote fit: {path}")
    if args.reps > 0:
        return _report(run_experiment(config))
    return EXIT_OK


def _cmd_run(args) -> int:
    configs = [load_config(c) for c in args.configs]
    if args.grid:
        configs += expand_grid(args.grid)
    if not configs:
        raise _UsageError("give at least one config file or --grid")
    code = EXIT_OK
    for config in configs:
        if args.workers:
            config = with_overrides(config, n_workers=args.workers)
        print(f"== {config.name}")
        code = max(code, _report(run_experiment(config)))
    return code


def _cmd_scenarios(args) -> int:
    catalog = scenario_catalog(include_alternates=not args.table_only)
    print(f"{'name':32s} {'M':>2s} {'n':>4s} {'phi':>5s} {'rho':>5s}  grid")
    for s in catalog:
        rho = "" if s.rho is None else f"{s.rho:g}"
        print(f"{s.name:32s} {s.M:2d} {s.n_train:4d} {s.phi:5g} {rho:>5s}  {s.tag}")
    if args.write_configs:
        target = Path(args.write_configs)
        target.mkdir(parents=True, exist_ok=True)
        names = []
        for s in catalog:
            (target / f"{s.name}.cfg").write_text(scenario_config_text(s), encoding="utf-8")
            names.append(f"{s.name}.cfg")
        (target / "grid.txt").write_text("\n".join(names) + "\n", encoding="utf-8")
        print(f"wrote {len(names)} configs to {target}")
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "fit": _cmd_fit, "run": _cmd_run,
            "scenarios": _cmd_scenarios}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"mixshrink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"mixshrink: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"mixshrink: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"mixshrink: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
