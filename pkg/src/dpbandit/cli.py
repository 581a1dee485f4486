"""Command line entry point: ``dpbandit <verb> [options]``.

Exit status is 0 on success, 1 when the configuration or input is invalid and
2 when a run fails.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as ex
from .errors import ConfigError, DPBanditError, InvalidInputError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument("--mode", help="mode to run (DAP, P-DAP, GP-DAP, DUP, CAP)")
    p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--horizon", type=int, metavar="T", help="number of rounds")
    p.add_argument("--epsilon", type=float, metavar="X", help="privacy budget of the private modes")
    p.add_argument("--geometric", action="store_true", help="level-dependent privacy budget")


def build_parser():
    parser = argparse.ArgumentParser(prog="dpbandit",
                                     description="Distributed private contextual bandit simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run one mode over the configured seeds")
    _common(p)
    p = sub.add_parser("suite", help="run every configured mode over the configured seeds")
    _common(p)
    p.add_argument("--modes", help="comma separated list overriding the configured modes")

    p = sub.add_parser("compare", help="pairwise comparison of mode summaries")
    p.add_argument("summaries", nargs="+", help="summary.json files or result directories")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")

    p = sub.add_parser("dump-field", help="expected rewards of every video on a grid")
    _common(p)
    p.add_argument("--resolution", type=int, default=21, help="grid points per dimension")

    sub.add_parser("selftest", help="quick pass over core properties")

    p = sub.add_parser("plot-data", help="downsampled mean curves from a result directory")
    p.add_argument("run_dir", help="directory holding run_*.csv files")
    p.add_argument("--out", metavar="PATH", help="write here instead of RUN_DIR/plot_data.csv")
    return parser


def load_config(args):
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    changes = {}
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.out is not None:
        changes["out"] = args.out
    if args.horizon is not None:
        changes["T"] = args.horizon
    if args.epsilon is not None:
        changes["epsilon"] = args.epsilon
    if args.geometric:
        changes["geometric"] = True
    if getattr(args, "modes", None):
        changes["modes"] = [m.strip() for m in args.modes.split(",") if m.strip()]
    return replace(cfg, **changes).validate()


def _print_summary(summaries, out=None):
    out = out or sys.stdout
    for s in summaries:
        acc, acc_sd = s.accuracy
        reg, reg_sd = s.avg_regret
        print(f"{s.mode:8s} accuracy {acc:.4f} +- {acc_sd:.4f}   "
              f"avg regret {reg:.4f} +- {reg_sd:.4f}   ({len(s.seeds)} seeds)", file=out)


def cmd_run(args):
    cfg = load_config(args)
    cfg = replace(cfg, modes=[cfg.mode])
    _print_summary(ex.run_suite(cfg, log=lambda m: print(m, file=sys.stderr)))
    return EXIT_OK


def cmd_suite(args):
    cfg = load_config(args)
    if not cfg.modes:
        cfg = replace(cfg, modes=list(ex.MODES))
    _print_summary(ex.run_suite(cfg, log=lambda m: print(m, file=sys.stderr)))
    return EXIT_OK


def cmd_compare(args):
    summaries = []
    for path in args.summaries:
        summaries.extend(ex.load_summaries(path))
    rows = ex.comparison_rows(ex.compare_modes(summaries))
    if args.out:
        ex.write_csv(args.out, ex.COMPARE_COLUMNS, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(ex.COMPARE_COLUMNS)
        w.writerows(rows)
    return EXIT_OK


def cmd_dump_field(args):
    cfg = load_config(args)
    if args.resolution < 2:
        raise InvalidInputError("resolution must be >= 2")
    if args.resolution ** cfg.d > 1_000_000:
        raise InvalidInputError("grid too large; lower --resolution")
    model, _, _ = ex.environment_for(cfg, cfg.seeds[0])
    axis = np.linspace(0.0, 1.0, args.resolution)
    X = np.array(list(itertools.product(axis, repeat=cfg.d)))
    U = model.expected_rewards(X)
    header = [f"x{j}" for j in range(cfg.d)] + [f"u{k}" for k in range(model.n_videos)] + ["best"]
    rows = [[*map(ex._fmt, x), *map(ex._fmt, u), int(np.argmax(u))] for x, u in zip(X, U)]
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out / f"field_seed{cfg.seeds[0]}.csv", header, rows)
    print(out / f"field_seed{cfg.seeds[0]}.csv")
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_checks
    ok = True
    for name, passed, detail in run_checks():
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_plot_data(args):
    rows = ex.plot_data(args.run_dir)
    out = args.out or str(Path(args.run_dir) / "plot_data.csv")
    ex.write_csv(out, ex.PLOT_COLUMNS, rows)
    print(out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "suite": cmd_suite, "compare": cmd_compare,
            "dump-field": cmd_dump_field, "selftest": cmd_selftest, "plot-data": cmd_plot_data}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; those are validation failures here
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DPBanditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("interrupted; finished runs were saved", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
