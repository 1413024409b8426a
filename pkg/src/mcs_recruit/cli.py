"""Command-line entry point.

Subcommands::

    synth         emit a synthetic dataset as SNAP-style edge/check-in files
    profile       build a mobility profile from training data and cache it
    select        run one selection algorithm and print the seed set
    bench         full (algorithm, p, q, repetition) sweep -> CSV
    budget-split  seed/non-seed budget ratio sweep -> CSV

All parameters come from a flat key=value config file; any key can be
overridden on the command line with ``--set key=value`` (see README for
the key reference).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .dataset import save_checkins, save_edges, split_train_test, synthesize
from .harness import (
    load_dataset,
    prepare_rep,
    run_budget_split,
    run_experiment,
    select_seeds,
)
from .mobility import estimate_lambda, save_profile
from .seeding import derive

log = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--out", type=Path, default=None, help="output path")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers")
    parser.add_argument(
        "--no-timing",
        action="store_true",
        help="write select_ms as 0.000 so output is byte-reproducible",
    )


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.no_timing:
        overrides["timing"] = "false"
    return load_config(args.config, overrides)


def _cmd_synth(args: argparse.Namespace) -> int:
    config = _build_config(args)
    if config.synth is None:
        raise SystemExit("synth requires synth=true plus synthesis keys in the config")
    ds = synthesize(config.synth, config.grid, config.cycles, derive(config.seed, "synth"))
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_edges(ds.graph, out_dir / "edges.txt")
    save_checkins(ds.all_checkins(), out_dir / "checkins.tsv")
    print(
        f"wrote {ds.graph.node_count} users, {ds.graph.edge_count} edges, "
        f"{ds.num_checkins} check-ins to {out_dir}/"
    )
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    config = _build_config(args)
    ds = load_dataset(config)
    train, _ = split_train_test(ds, config.cycles, derive(config.seed, "split", 0))
    profile = estimate_lambda(train, config.grid, config.cycles)
    out = Path(config.out)
    save_profile(profile, out)
    print(f"profiled {len(profile.users())} users -> {out}")
    return 0


def _cmd_select(args: argparse.Namespace) -> int:
    config = _build_config(args)
    ds = load_dataset(config)
    prep = prepare_rep(config, ds, rep=0)
    p = args.p if args.p is not None else config.p_values[0]
    q = args.q if args.q is not None else config.q_values[0]
    seeds = select_seeds(
        args.algorithm,
        prep,
        p,
        q,
        config.beta,
        derive(config.seed, "select", 0, 0, p, q),
        config.probe_runs,
    )
    print(" ".join(str(s) for s in seeds))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _build_config(args)
    report = run_experiment(config)
    print(f"wrote {len(report.rows)} rows to {config.out}")
    return 0


def _cmd_budget_split(args: argparse.Namespace) -> int:
    config = _build_config(args)
    report = run_budget_split(config)
    print(f"wrote {len(report.rows)} rows to {config.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcs-recruit",
        description="Seed selection for social-network-assisted crowd sensing",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="emit synthetic dataset files")
    _add_common(p_synth)
    p_synth.set_defaults(func=_cmd_synth)

    p_profile = sub.add_parser("profile", help="build and cache a mobility profile")
    _add_common(p_profile)
    p_profile.set_defaults(func=_cmd_profile)

    p_select = sub.add_parser("select", help="run one algorithm, print the seed set")
    _add_common(p_select)
    p_select.add_argument("algorithm", help="maxdegree|maxcov|hg|naivefast|fast|basic")
    p_select.add_argument("--p", type=int, default=None, help="seed count")
    p_select.add_argument("--q", type=int, default=None, help="worker budget")
    p_select.set_defaults(func=_cmd_select)

    p_bench = sub.add_parser("bench", help="full sweep -> CSV")
    _add_common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    p_budget = sub.add_parser("budget-split", help="budget ratio sweep -> CSV")
    _add_common(p_budget)
    p_budget.set_defaults(func=_cmd_budget_split)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
