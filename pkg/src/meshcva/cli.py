"""Command-line front end.

Subcommands: estimate (one run per mesh size), replicate (full replication
study with CSV table), converge (grid-refinement error sweep), oracle
(nested Monte Carlo reference), dump-paths (write a simulated family).
Every subcommand accepts --config FILE with the same keys as the flags;
explicit flags win over file values.  Logs go to standard error, results to
standard output or --out.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict

from .estimators import nested_mc_oracle
from .harness import (
    ESTIMATOR_CHOICES,
    ReplicationReport,
    ReplicationRow,
    RunConfig,
    emit_convergence_csv,
    emit_csv,
    format_convergence_csv,
    format_csv,
    resolve_scenario,
    run_convergence_study,
    run_replication_study,
    _run_single,
)
from .models import ModelConfigError, read_flat_config
from .paths import dump_paths, simulate_family

logger = logging.getLogger(__name__)

_SCALAR_KEYS = {
    "model": str, "portfolio": str, "estimator": str, "n": int, "L0": int,
    "reps": int, "delta": float, "c0": float, "ell0": int, "seed": int,
    "out": str,
}


def _add_common_flags(parser, n_repeatable=False):
    parser.add_argument("--config", help="flat key-value run config file")
    parser.add_argument("--model", help="model config file")
    parser.add_argument("--portfolio",
                        help="builtin scenario name or portfolio config file")
    parser.add_argument("--estimator", choices=ESTIMATOR_CHOICES)
    if n_repeatable:
        parser.add_argument("--n", action="append", type=int,
                            help="grid size (repeatable)")
    else:
        parser.add_argument("--n", type=int, help="grid size")
    parser.add_argument("--L", action="append", type=int,
                        help="mesh size (repeatable)")
    parser.add_argument("--L0", type=int, help="evaluation family size")
    parser.add_argument("--reps", type=int, help="replication count")
    parser.add_argument("--delta", type=float, help="window rate knob in (0,1)")
    parser.add_argument("--c0", type=float, help="window width constant")
    parser.add_argument("--ell0", type=int, help="smoothness order")
    parser.add_argument("--seed", type=int, help="base seed")
    parser.add_argument("--out", help="output file path")


def _config_entries(args):
    if getattr(args, "config", None) is None:
        return {}
    return read_flat_config(args.config)


def _scalar(args, entries, key, default):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in entries:
        tokens = entries[key]
        if len(tokens) != 1 or len(tokens[0]) != 1:
            raise ValueError(f"config key {key!r} expects exactly one value")
        return _SCALAR_KEYS[key](tokens[0][0])
    return default


def _int_list(args, entries, key, default):
    val = getattr(args, key, None)
    if val:
        return [int(v) for v in val]
    if key in entries:
        return [int(tok) for tokens in entries[key] for tok in tokens]
    return list(default)


def _run_config(args, n_list=False):
    entries = _config_entries(args)
    if n_list:
        ns = _int_list(args, entries, "n", [100])
        n = 100
    else:
        ns = None
        n = _scalar(args, entries, "n", 100)
    return RunConfig(
        model=_scalar(args, entries, "model", None),
        portfolio=_scalar(args, entries, "portfolio", "brownian-example"),
        estimator=_scalar(args, entries, "estimator", "c2"),
        n=n,
        L=tuple(_int_list(args, entries, "L", [100])),
        L0=_scalar(args, entries, "L0", 10000),
        reps=_scalar(args, entries, "reps", 100),
        delta=_scalar(args, entries, "delta", 0.5),
        c0=_scalar(args, entries, "c0", 0.05),
        ell0=_scalar(args, entries, "ell0", 1),
        seed=_scalar(args, entries, "seed", 0),
        out=_scalar(args, entries, "out", None),
    ), ns


def _single_run_report(config, results, column_est):
    rows = []
    for L, res in results:
        mean1 = res.value if column_est != "c2" else None
        mean2 = res.value if column_est == "c2" else None
        rows.append(ReplicationRow(L=L, mean_c1=mean1, mean_c2=mean2,
                                   sd_c1=None, sd_c2=None))
    return ReplicationReport(rows=tuple(rows), values={}, config=asdict(config),
                             wall_time=0.0)


def _cmd_estimate(args):
    config, _ = _run_config(args)
    if config.estimator == "both":
        raise ValueError("estimate runs one estimator; use replicate for both")
    scenario = resolve_scenario(config)
    results = []
    for L in config.L:
        res = _run_single(config.estimator, scenario, config, L, config.seed)
        results.append((L, res))
        se = res.standard_error
        print(f"estimator={config.estimator} L={L} n={config.n} "
              f"epsilon={res.config['epsilon']} value={res.value:.10f} "
              f"stderr={'' if se is None else format(se, '.10f')}")
    if config.out is not None:
        emit_csv(_single_run_report(config, results, config.estimator), config.out)
        logger.info("wrote %s", config.out)
    return 0


def _cmd_replicate(args):
    config, _ = _run_config(args)
    report = run_replication_study(config)
    text = format_csv(report)
    sys.stdout.write(text)
    if config.out is not None:
        with open(config.out, "w") as fh:
            fh.write(text)
        logger.info("wrote %s", config.out)
    logger.info("study wall time %.1fs", report.wall_time)
    return 0


def _cmd_converge(args):
    config, ns = _run_config(args, n_list=True)
    report = run_convergence_study(ns)
    sys.stdout.write(format_convergence_csv(report))
    print(f"slope={report.slope:.6f}")
    if config.out is not None:
        emit_convergence_csv(report, config.out)
        logger.info("wrote %s", config.out)
    return 0


def _cmd_oracle(args):
    config, _ = _run_config(args)
    scenario = resolve_scenario(config)
    L_outer = config.L[-1]
    res = nested_mc_oracle(scenario.model, scenario.portfolio, scenario.g,
                           scenario.partition, L_outer, config.L0,
                           seed=config.seed)
    se = res.standard_error
    print(f"estimator=oracle L={L_outer} L0={config.L0} n={config.n} "
          f"value={res.value:.10f} "
          f"stderr={'' if se is None else format(se, '.10f')}")
    if config.out is not None:
        emit_csv(_single_run_report(config, [(L_outer, res)], "oracle"),
                 config.out)
        logger.info("wrote %s", config.out)
    return 0


def _cmd_dump_paths(args):
    config, _ = _run_config(args)
    if config.out is None:
        raise ValueError("dump-paths requires --out")
    scenario = resolve_scenario(config)
    family = simulate_family(scenario.model, scenario.partition, config.L[-1],
                             config.seed, "dump")
    dump_paths(family, config.out)
    logger.info("wrote %s", config.out)
    return 0


_COMMANDS = {
    "estimate": (_cmd_estimate, False, "run one estimation per mesh size"),
    "replicate": (_cmd_replicate, False, "run a replication study, emit CSV"),
    "converge": (_cmd_converge, True, "grid-refinement error sweep"),
    "oracle": (_cmd_oracle, False, "nested Monte Carlo reference run"),
    "dump-paths": (_cmd_dump_paths, False, "simulate a family and write it"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meshcva",
        description="Stochastic-mesh CVA estimation harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, n_repeatable, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p, n_repeatable=n_repeatable)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ModelConfigError) as exc:
        logger.error("%s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
