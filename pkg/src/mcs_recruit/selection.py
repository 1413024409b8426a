"""Seed selection: coverage estimation, greedy selectors and baselines.

A seed set is an ordered list of user ids without duplicates.  Selectors
come in three flavors:

* ``basic_selector`` — the reference greedy: every iteration re-estimates
  the expected temporal-spatial coverage of each candidate via Monte-Carlo
  propagation and keeps the best marginal gain.  Accurate, expensive.
* ``naive_fast`` — pure rank heuristic (degree rank blended with a
  trajectory-diversity rank), no simulation at all.
* ``fast_selector`` — rank-driven while propagation is budget-insensitive,
  switching to the Monte-Carlo greedy once cheap probe simulations detect
  the worker budget binding.

Ties everywhere break toward the lowest user id, which together with
derived seeds makes every selector bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .dataset import SocialGraph
from .mobility import MobilityProfile, MobilityVector, avg_similarity_to_set
from .propagation import (
    ActivationEstimate,
    FactorMap,
    PropagationConfig,
    _activation_counts,
    _dense_seeds,
    _Engine,
    network_spread_flag,
)
from .seeding import SeedLike, derive

log = logging.getLogger(__name__)

SeedSet = list[int]

#: Coverage gains at or below this are treated as "no increase" when greedy
#: loops decide whether to stop; guards against float rounding noise.
GAIN_EPS = 1e-12


@dataclass(frozen=True)
class CoverageEstimate:
    """Expected covered fraction plus the per-cell coverage probabilities."""

    fraction: float
    phi: Mapping[tuple[int, int], float]


@dataclass
class IterationRecord:
    user: int
    phase: str  # "rank" or "mc"
    baseline: Optional[float] = None  # estimated coverage before adding the user
    achieved: Optional[float] = None  # estimated coverage after adding the user


@dataclass
class SelectionLog:
    """Optional per-iteration trace a selector fills in when passed one."""

    iterations: list[IterationRecord] = field(default_factory=list)


def estimate_coverage(
    activation: ActivationEstimate,
    profile: MobilityProfile,
    universe: tuple[int, int, int],
) -> CoverageEstimate:
    """Expected coverage from acceptance probabilities and mobility.

    A cell is covered unless every user misses it, so its probability is
    ``1 - prod_u (1 - alpha_u(cell) * P(u))`` with the product over all
    users with positive acceptance probability (workers recruited along the
    cascade count, not only seeds).  The overall fraction averages over all
    unmasked cells.
    """
    miss: dict[tuple[int, int], float] = {}
    for user, p_u in activation.frequency.items():
        if p_u <= 0.0:
            continue
        for cell, alpha in profile.coverage_cells(user).items():
            miss[cell] = miss.get(cell, 1.0) * (1.0 - alpha * p_u)
    phi = {cell: 1.0 - m for cell, m in miss.items()}
    total = universe[2]
    fraction = sum(phi.values()) / total if total else 0.0
    return CoverageEstimate(fraction, phi)


@dataclass
class SelectionContext:
    """Everything a selector needs: graph, factors, mobility and MC settings.

    ``runs`` is the Monte-Carlo sample count per coverage estimate (the
    reference setting is 1000; tests drop it to ~100 for speed).
    """

    graph: SocialGraph
    factors: FactorMap
    profile: MobilityProfile
    universe: tuple[int, int, int]
    config: PropagationConfig
    runs: int = 1000

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        n = self.graph.node_count
        self._flat_len = self.profile.subarea_count * self.profile.cycle_count
        self._cells: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * n
        self._alphas: list[np.ndarray] = [np.empty(0, dtype=np.float64)] * n
        ncyc = self.profile.cycle_count
        for user in self.profile.users():
            if user not in self.graph:
                continue
            cov = self.profile.coverage_cells(user)
            if not cov:
                continue
            i = self.graph.dense_index(user)
            flat = np.array([s * ncyc + c for (s, c) in cov], dtype=np.int64)
            self._cells[i] = flat
            self._alphas[i] = np.array(list(cov.values()), dtype=np.float64)

    def engine(self, q: int) -> _Engine:
        return _Engine.build(self.graph, self.factors, replace(self.config, q=q))

    def coverage_of_frequencies(self, freq: np.ndarray) -> float:
        """Covered fraction for a dense acceptance-frequency vector."""
        miss = np.ones(self._flat_len, dtype=np.float64)
        for i in np.flatnonzero(freq > 0.0):
            cells = self._cells[i]
            if cells.size:
                miss[cells] *= 1.0 - self._alphas[i] * freq[i]
        return float((self._flat_len - miss.sum()) / self.universe[2])

    def estimated_coverage(self, seeds: Sequence[int], q: int, rng_seed: SeedLike) -> float:
        engine = self.engine(q)
        counts, _ = _activation_counts(
            engine, _dense_seeds(self.graph, seeds), self.runs, rng_seed
        )
        return self.coverage_of_frequencies(counts / self.runs)


def marginal_utility(
    u: int, current: Sequence[int], ctx: SelectionContext, q: int, rng_seed: SeedLike
) -> float:
    """Coverage gain of adding ``u`` to the current seed set.

    Both coverage estimates run fresh Monte-Carlo simulations from the same
    derived seed (common random numbers), so the difference is not drowned
    in sampling noise.
    """
    if u in current:
        raise ValueError(f"user {u} is already a seed")
    base = ctx.estimated_coverage(list(current), q, rng_seed)
    with_u = ctx.estimated_coverage(list(current) + [u], q, rng_seed)
    return with_u - base


def _valid_pool(candidates: Iterable[int], graph: SocialGraph) -> list[int]:
    pool = sorted(set(candidates))
    if not pool:
        raise ValueError("candidate set is empty")
    missing = [u for u in pool if u not in graph]
    if missing:
        raise ValueError(f"candidates not in graph: {missing[:5]}")
    return pool


def _mc_greedy_rounds(
    chosen: SeedSet,
    remaining: list[int],
    p: int,
    q: int,
    ctx: SelectionContext,
    rng_seed: SeedLike,
    log_to: Optional[SelectionLog],
    tag: str,
) -> None:
    """Shared Monte-Carlo greedy loop of basic_selector and fast phase 2.

    Mutates ``chosen``/``remaining``; stops at ``p`` seeds or when no
    candidate increases the estimated coverage.  When seeds count toward
    the worker budget, at most ``q`` seeds fit.
    """
    engine = ctx.engine(q)
    if ctx.config.seeds_count_toward_budget:
        p = min(p, q)
    while len(chosen) < p and remaining:
        iter_seed = derive(rng_seed, tag, len(chosen))
        baseline = _coverage_via(engine, ctx, chosen, iter_seed)
        best_user, best_cov = None, -np.inf
        for u in remaining:  # ascending ids: strict > keeps the lowest on ties
            cov = _coverage_via(engine, ctx, chosen + [u], iter_seed)
            if cov > best_cov:
                best_user, best_cov = u, cov
        assert best_user is not None
        if best_cov - baseline <= GAIN_EPS:
            break
        chosen.append(best_user)
        remaining.remove(best_user)
        if log_to is not None:
            log_to.iterations.append(
                IterationRecord(best_user, "mc", baseline=baseline, achieved=best_cov)
            )


def _coverage_via(
    engine: _Engine, ctx: SelectionContext, seeds: Sequence[int], rng_seed: SeedLike
) -> float:
    counts, _ = _activation_counts(
        engine, _dense_seeds(ctx.graph, seeds), ctx.runs, rng_seed
    )
    return ctx.coverage_of_frequencies(counts / ctx.runs)


def basic_selector(
    candidates: Iterable[int],
    p: int,
    q: int,
    ctx: SelectionContext,
    rng_seed: SeedLike,
    log_to: Optional[SelectionLog] = None,
) -> SeedSet:
    """Reference greedy: p rounds of best Monte-Carlo marginal coverage gain.

    Every round estimates the coverage of ``current + [u]`` for each
    remaining candidate (all sharing that round's derived seed) and keeps
    the best; stops early when nobody improves the estimate.
    """
    pool = _valid_pool(candidates, ctx.graph)
    chosen: SeedSet = []
    _mc_greedy_rounds(chosen, pool, p, q, ctx, rng_seed, log_to, "basic")
    return chosen


# -- rank utilities ------------------------------------------------------------


def _degree_ranks(degrees: np.ndarray) -> np.ndarray:
    """Rank 1..k, larger degree -> larger rank, ties share the lower rank."""
    order = np.sort(degrees)
    return np.searchsorted(order, degrees, side="left") + 1


def _diversity_ranks(similarities: np.ndarray) -> np.ndarray:
    """Rank 1..k, smaller similarity (more diverse) -> larger rank."""
    order = np.sort(similarities)
    greater = len(similarities) - np.searchsorted(order, similarities, side="right")
    return greater + 1


class _RankState:
    """Incrementally maintained rank scores over a shrinking candidate pool."""

    def __init__(
        self, pool: Sequence[int], graph: SocialGraph, profile: MobilityProfile
    ) -> None:
        self.pool: list[int] = list(pool)
        self.graph = graph
        self.vectors: dict[int, MobilityVector] = {u: profile.vector(u) for u in pool}
        self.sim_sums: dict[int, float] = {u: 0.0 for u in pool}
        self.chosen_count = 0

    def scores(self, beta: float) -> np.ndarray:
        degrees = np.array([self.graph.degree(u) for u in self.pool], dtype=np.float64)
        if self.chosen_count:
            sims = np.array(
                [self.sim_sums[u] / self.chosen_count for u in self.pool], dtype=np.float64
            )
        else:
            sims = np.zeros(len(self.pool), dtype=np.float64)
        return beta * _degree_ranks(degrees) + (1.0 - beta) * _diversity_ranks(sims)

    def take_best(self, beta: float) -> int:
        best = int(np.argmax(self.scores(beta)))  # first max = lowest id
        user = self.pool.pop(best)
        vec = self.vectors[user]
        for u in self.pool:
            self.sim_sums[u] += _vector_cosine(self.vectors[u], vec)
        self.chosen_count += 1
        return user


def _vector_cosine(a: MobilityVector, b: MobilityVector) -> float:
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    return min(max(a.dot(b) / (a.norm * b.norm), 0.0), 1.0)


def rank_utility(
    u: int,
    current: Sequence[int],
    beta: float,
    graph: SocialGraph,
    profile: MobilityProfile,
    candidates: Optional[Iterable[int]] = None,
) -> float:
    """Blended rank score beta*DegreeRank + (1-beta)*TriDiffRank for one user.

    Ranks run over the candidate pool minus the current seeds (all graph
    nodes when ``candidates`` is omitted).  Degree rank grows with degree;
    the trajectory-difference rank grows as the user's average similarity
    to the current seeds shrinks, preferring diverse movers.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    pool = sorted(set(candidates) if candidates is not None else set(graph.nodes()))
    pool = [x for x in pool if x not in set(current)]
    if u not in pool:
        raise ValueError(f"user {u} is not an available candidate")
    degrees = np.array([graph.degree(x) for x in pool], dtype=np.float64)
    chosen_vecs = [profile.vector(x) for x in current]
    sims = np.array(
        [avg_similarity_to_set(profile.vector(x), chosen_vecs) for x in pool],
        dtype=np.float64,
    )
    scores = beta * _degree_ranks(degrees) + (1.0 - beta) * _diversity_ranks(sims)
    return float(scores[pool.index(u)])


def naive_fast(
    candidates: Iterable[int],
    p: int,
    beta: float,
    graph: SocialGraph,
    profile: MobilityProfile,
) -> SeedSet:
    """Pure rank-utility greedy: p picks, no propagation simulation at all."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    pool = _valid_pool(candidates, graph)
    state = _RankState(pool, graph, profile)
    chosen: SeedSet = []
    while len(chosen) < p and state.pool:
        chosen.append(state.take_best(beta))
    return chosen


def fast_selector(
    candidates: Iterable[int],
    p: int,
    q: int,
    beta: float,
    ctx: SelectionContext,
    rng_seed: SeedLike,
    probe_runs: int = 10,
    log_to: Optional[SelectionLog] = None,
) -> SeedSet:
    """Two-phase selector: rank greedy until the budget starts binding.

    Phase 1 adds the best rank-utility candidate and then probes the
    current seed set with a few simulations; once a strict majority of
    probes stop on the worker budget (budget-sensitive phase), phase 2
    continues with the Monte-Carlo greedy of ``basic_selector`` until p
    seeds are chosen or no candidate helps.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    pool = _valid_pool(candidates, ctx.graph)
    cfg_q = replace(ctx.config, q=q)
    if ctx.config.seeds_count_toward_budget:
        p = min(p, q)
    state = _RankState(pool, ctx.graph, ctx.profile)
    chosen: SeedSet = []
    flag = False
    while len(chosen) < p and state.pool and not flag:
        user = state.take_best(beta)
        chosen.append(user)
        if log_to is not None:
            log_to.iterations.append(IterationRecord(user, "rank"))
        flag = network_spread_flag(
            ctx.graph,
            ctx.factors,
            chosen,
            cfg_q,
            probe_runs=probe_runs,
            rng_seed=derive(rng_seed, "probe", len(chosen)),
        )
    if flag:
        _mc_greedy_rounds(chosen, state.pool, p, q, ctx, rng_seed, log_to, "mc")
    return chosen


# -- baselines ------------------------------------------------------------------


def max_degree_baseline(candidates: Iterable[int], p: int, graph: SocialGraph) -> SeedSet:
    """Top-p candidates by degree, ties toward the lowest user id."""
    pool = _valid_pool(candidates, graph)
    pool.sort(key=lambda u: (-graph.degree(u), u))
    return pool[:p]


def max_cov_baseline(
    candidates: Iterable[int],
    p: int,
    profile: MobilityProfile,
    universe: tuple[int, int, int],
) -> SeedSet:
    """Greedy expected-coverage maximization over the seeds themselves.

    No propagation: each pick maximizes the closed-form coverage gain of
    the selected users with acceptance probability 1. Stops early once no
    candidate adds coverage.
    """
    pool = sorted(set(candidates))
    if not pool:
        raise ValueError("candidate set is empty")
    cover = {u: profile.coverage_cells(u) for u in pool}
    miss: dict[tuple[int, int], float] = {}
    chosen: SeedSet = []
    while len(chosen) < p and pool:
        best_user, best_gain = None, 0.0
        for u in pool:
            gain = sum(miss.get(cell, 1.0) * a for cell, a in cover[u].items())
            if best_user is None or gain > best_gain:
                best_user, best_gain = u, gain
        if best_gain <= GAIN_EPS:
            break
        for cell, a in cover[best_user].items():
            miss[cell] = miss.get(cell, 1.0) * (1.0 - a)
        chosen.append(best_user)
        pool.remove(best_user)
    return chosen


def heuristic_greedy_baseline(
    candidates: Iterable[int], p: int, graph: SocialGraph, profile: MobilityProfile
) -> SeedSet:
    """Top-p by (distinct subareas visited) * degree, ties toward lowest id."""
    pool = _valid_pool(candidates, graph)
    pool.sort(key=lambda u: (-profile.subareas_visited(u) * graph.degree(u), u))
    return pool[:p]
