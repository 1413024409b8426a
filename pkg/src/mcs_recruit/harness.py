"""Experiment runner: ingest, profile, select, propagate, evaluate.

Reproduces the comparison protocol at configurable scale: per repetition a
held-out week becomes the test set, seeds are selected on training data,
one propagation realization recruits the workers, and coverage is measured
on the test week's check-ins.  Results stream into a CSV whose rows are
deterministic under a fixed master seed, independent of the worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .config import AttributeSpec, ExperimentConfig
from .dataset import (
    Dataset,
    evaluation_epoch,
    filter_active_region,
    load_checkins,
    load_edges,
    split_train_test,
    synthesize,
)
from .grid import CycleSpec, GridSpec, cell_universe, locate_cycle, locate_subarea
from .mobility import MobilityProfile, estimate_lambda
from .propagation import (
    Task,
    UserAttributes,
    acceptance_factors,
    estimate_activation,
    run_spread,
)
from .seeding import SeedLike, as_seedseq, derive
from .selection import (
    SelectionContext,
    basic_selector,
    estimate_coverage,
    fast_selector,
    heuristic_greedy_baseline,
    max_cov_baseline,
    max_degree_baseline,
    naive_fast,
)

log = logging.getLogger(__name__)

CSV_HEADER = (
    "algorithm",
    "model",
    "p",
    "q",
    "z",
    "rep",
    "est_coverage",
    "measured_coverage",
    "workers",
    "select_ms",
)


@dataclass(frozen=True)
class RowResult:
    """One (algorithm, p, q, repetition) outcome."""

    algorithm: str
    model: str
    p: int
    q: int
    z: Optional[float]
    rep: int
    est_coverage: float
    measured_coverage: float
    workers: int
    select_ms: float


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple[RowResult, ...]

    def write_csv(self, path: Union[str, Path], timing: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            _write_rows(fh, self.rows, timing)


def _write_rows(fh, rows: Sequence[RowResult], timing: bool) -> None:
    writer = csv.writer(fh)
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(_format_row(r, timing))


def _format_row(r: RowResult, timing: bool) -> list[str]:
    return [
        r.algorithm,
        r.model,
        str(r.p),
        str(r.q),
        "" if r.z is None else f"{r.z:g}",
        str(r.rep),
        f"{r.est_coverage:.6f}",
        f"{r.measured_coverage:.6f}",
        str(r.workers),
        f"{r.select_ms:.3f}" if timing else "0.000",
    ]


# -- attribute generation -----------------------------------------------------


def generate_attributes(
    users: Sequence[int], spec: AttributeSpec, rng_seed: SeedLike
) -> dict[int, UserAttributes]:
    """Draw interests and minimum rewards for every user, deterministically."""
    ordered = sorted(users)
    rng = np.random.default_rng(as_seedseq(rng_seed))
    interest = rng.random((len(ordered), spec.topics)) < spec.interest_prob
    kind = spec.minimum[0]
    if kind == "point":
        minima = np.full(len(ordered), float(spec.minimum[1]))
    elif kind == "uniform":
        minima = rng.uniform(spec.minimum[1], spec.minimum[2], size=len(ordered))
    else:  # choice
        minima = rng.choice(np.array(spec.minimum[1:], dtype=np.float64), size=len(ordered))
    return {
        u: UserAttributes(tuple(int(v) for v in interest[i]), float(minima[i]))
        for i, u in enumerate(ordered)
    }


# -- evaluation ----------------------------------------------------------------


def measure_actual_coverage(
    workers: Sequence[int],
    test: Dataset,
    grid: GridSpec,
    cycles: CycleSpec,
    epoch: Optional[datetime] = None,
) -> float:
    """Fraction of cells with at least one test-week check-in by a worker.

    ``epoch`` anchors day 0 of the cycle indexing; by default it is the
    Monday of the test week, so cycle days line up with weekdays exactly as
    in the mobility profiles.
    """
    if epoch is None:
        epoch = evaluation_epoch(test)
        if epoch is None:
            return 0.0
    covered: set[tuple[int, int]] = set()
    for user in set(workers):
        for c in test.checkins.get(user, ()):
            sub = locate_subarea(c.lat, c.lon, grid)
            if sub is None:
                continue
            cyc = locate_cycle(c.time, cycles, epoch)
            if cyc is None:
                continue
            covered.add((sub, cyc))
    total = cell_universe(grid, cycles)[2]
    return len(covered) / total if total else 0.0


# -- pipeline ------------------------------------------------------------------


@dataclass
class PreparedRep:
    """Per-repetition state shared by all (algorithm, p, q) rows."""

    rep: int
    train: Dataset
    test: Dataset
    profile: MobilityProfile
    ctx: SelectionContext
    candidates: list[int]
    epoch: Optional[datetime]


def load_dataset(config: ExperimentConfig) -> Dataset:
    """Materialize the configured dataset (files or synthesis) and filter it."""
    if config.synth is not None:
        ds = synthesize(config.synth, config.grid, config.cycles, derive(config.seed, "synth"))
    else:
        graph = load_edges(config.edges)
        records, _ = load_checkins(config.checkins)
        ds = Dataset.build(graph, records)
    return filter_active_region(ds, config.grid, config.min_checkins)


def prepare_rep(config: ExperimentConfig, ds: Dataset, rep: int) -> PreparedRep:
    train, test = split_train_test(ds, config.cycles, derive(config.seed, "split", rep))
    profile = estimate_lambda(train, config.grid, config.cycles)
    users = ds.graph.nodes()
    attrs = generate_attributes(users, config.attributes, derive(config.seed, "attrs", rep))
    task = Task(config.attributes.task_vector(), config.attributes.task_incentive)
    factors = acceptance_factors(task, attrs, config.propagation)
    ctx = SelectionContext(
        graph=ds.graph,
        factors=factors,
        profile=profile,
        universe=cell_universe(config.grid, config.cycles),
        config=config.propagation,
        runs=config.runs,
    )
    return PreparedRep(rep, train, test, profile, ctx, users, evaluation_epoch(test))


def select_seeds(
    algorithm: str,
    prep: PreparedRep,
    p: int,
    q: int,
    beta: float,
    rng_seed: SeedLike,
    probe_runs: int = 10,
) -> list[int]:
    ctx = prep.ctx
    if algorithm == "maxdegree":
        return max_degree_baseline(prep.candidates, p, ctx.graph)
    if algorithm == "maxcov":
        return max_cov_baseline(prep.candidates, p, prep.profile, ctx.universe)
    if algorithm == "hg":
        return heuristic_greedy_baseline(prep.candidates, p, ctx.graph, prep.profile)
    if algorithm == "naivefast":
        return naive_fast(prep.candidates, p, beta, ctx.graph, prep.profile)
    if algorithm == "fast":
        return fast_selector(
            prep.candidates, p, q, beta, ctx, rng_seed, probe_runs=probe_runs
        )
    if algorithm == "basic":
        return basic_selector(prep.candidates, p, q, ctx, rng_seed)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def evaluate_seeds(
    prep: PreparedRep,
    config: ExperimentConfig,
    seeds: Sequence[int],
    q: int,
    rng_seed: SeedLike,
) -> tuple[float, float, int]:
    """(estimated coverage, measured test-week coverage, worker count).

    Workers come from one propagation realization per evaluation draw (the
    deployed task propagates once in reality); with ``eval_draws > 1`` the
    measured coverage and worker count are averaged over several draws.
    """
    ctx = prep.ctx
    cfg = replace(config.propagation, q=q)
    estimate = estimate_activation(
        ctx.graph, ctx.factors, seeds, cfg, config.runs, derive(rng_seed, "estimate")
    )
    est_cov = estimate_coverage(estimate, prep.profile, ctx.universe).fraction
    measured = 0.0
    workers = 0.0
    for draw in range(config.eval_draws):
        spread = run_spread(ctx.graph, ctx.factors, seeds, cfg, derive(rng_seed, "eval", draw))
        measured += measure_actual_coverage(
            spread.activated, prep.test, config.grid, config.cycles, prep.epoch
        )
        workers += spread.workers
    return est_cov, measured / config.eval_draws, round(workers / config.eval_draws)


def _run_one_rep(
    config: ExperimentConfig,
    ds: Dataset,
    rep: int,
    pq_pairs: Sequence[tuple[int, int]],
    z: Optional[float] = None,
) -> list[RowResult]:
    prep = prepare_rep(config, ds, rep)
    rows: list[RowResult] = []
    for alg_idx, algorithm in enumerate(config.algorithms):
        for p, q in pq_pairs:
            try:
                sel_seed = derive(config.seed, "select", rep, alg_idx, p, q)
                t0 = time.perf_counter()
                seeds = select_seeds(
                    algorithm, prep, p, q, config.beta, sel_seed, config.probe_runs
                )
                select_ms = (time.perf_counter() - t0) * 1000.0
                eval_seed = derive(config.seed, "outcome", rep, alg_idx, p, q)
                est, measured, workers = evaluate_seeds(prep, config, seeds, q, eval_seed)
                rows.append(
                    RowResult(
                        algorithm,
                        config.propagation.model,
                        p,
                        q,
                        z,
                        rep,
                        est,
                        measured,
                        workers,
                        select_ms,
                    )
                )
            except Exception:
                log.exception(
                    "row failed: algorithm=%s p=%d q=%d rep=%d", algorithm, p, q, rep
                )
    return rows


def run_experiment(
    config: ExperimentConfig, out: Optional[Union[str, Path]] = None
) -> CoverageReport:
    """Full sweep over (algorithm, p, q, repetition); rows stream to CSV.

    Repetitions are independent and may run on parallel workers; rows are
    always written in repetition order so the CSV is byte-identical for any
    worker count.  Failures abort only their own row.
    """
    ds = load_dataset(config)
    pq_pairs = [(p, q) for p in config.p_values for q in config.q_values]
    out_path = Path(out) if out is not None else Path(config.out)

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        all_rows: list[RowResult] = []
        for rows in _rep_results(config, ds, pq_pairs):
            for r in rows:
                writer.writerow(_format_row(r, config.timing))
            fh.flush()
            all_rows.extend(rows)
    return CoverageReport(tuple(all_rows))


def _rep_results(config, ds, pq_pairs):
    """Yield per-repetition row lists in repetition order."""
    reps = range(config.repetitions)
    if config.workers <= 1:
        for rep in reps:
            yield _run_one_rep(config, ds, rep, pq_pairs)
        return
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(_run_one_rep, config, ds, rep, pq_pairs) for rep in reps]
        for future in futures:  # completion order ignored: yield in rep order
            yield future.result()


def budget_split_points(
    budget: float, seed_reward: float, nonseed_reward: float, z: float
) -> tuple[int, int]:
    """(p, q_nonseed) for a seed/non-seed budget split ratio z = B_nsd / B_sd."""
    if budget <= 0 or seed_reward <= 0 or nonseed_reward <= 0:
        raise ValueError("budget and rewards must be positive")
    if z < 0:
        raise ValueError("z must be non-negative")
    b_sd = budget / (1.0 + z)
    b_nsd = budget - b_sd
    p = math.floor(b_sd / seed_reward)
    q_nonseed = math.floor(b_nsd / nonseed_reward)
    if p < 1:
        raise ValueError(f"z={z} leaves budget for {p} seeds; need at least 1")
    return p, q_nonseed


def run_budget_split(
    config: ExperimentConfig, out: Optional[Union[str, Path]] = None
) -> CoverageReport:
    """Sweep the seed/non-seed budget split ratio z.

    For each z the seed count is bought from the seed budget and the
    non-seed worker budget is disjoint (seeds do not count toward q), as
    the split of the total budget implies.  Runs the first configured
    algorithm.
    """
    algorithm = config.algorithms[0]
    propagation = replace(config.propagation, seeds_count_toward_budget=False)
    ds = load_dataset(replace(config, propagation=propagation))
    out_path = Path(out) if out is not None else Path(config.out)

    all_rows: list[RowResult] = []
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for z in config.z_values:
            p, q_nonseed = budget_split_points(
                config.budget, config.seed_reward, config.nonseed_reward, z
            )
            cfg = replace(config, propagation=propagation, algorithms=(algorithm,))
            for rep in range(config.repetitions):
                rows = _run_one_rep(cfg, ds, rep, [(p, q_nonseed)], z=z)
                for r in rows:
                    writer.writerow(_format_row(r, config.timing))
                fh.flush()
                all_rows.extend(rows)
    return CoverageReport(tuple(all_rows))
