"""Task propagation on the social graph.

Implements the cascade (IC) and threshold (LT) diffusion models extended
with task-specific acceptance factors: a topical-interest boost and an
incentive-attraction boost, both mapped through a concave influence-increase
curve so that stronger stimuli yield diminishing returns.  Spread is
budget-capped: propagation stops either when a round activates nobody
("exhausted") or the moment the recruited-worker budget is reached
("budget").

Determinism and coupling
------------------------
Every Monte-Carlo run is identified by a 64-bit key drawn from the run's
seed stream.  Cascade edge outcomes are pure hashes of (run key, edge
position), never of traversal order, which makes runs reproducible across
thread counts and *couples* runs over different seed sets: under the same
key, a larger seed set activates a superset of users (when neither run is
budget-stopped).  Greedy selectors rely on this coupling for low-noise
marginal-utility comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import SocialGraph
from .seeding import SeedLike, as_seedseq

STOP_EXHAUSTED = "exhausted"
STOP_BUDGET = "budget"

_MODELS = ("ic", "lt")
_SIMILARITIES = ("cosine", "jaccard")
_ATTRACTIONS = ("tanh", "linear")


@dataclass(frozen=True)
class Task:
    """A sensing task: binary topic vector plus per-worker incentive reward."""

    topic: tuple[int, ...]
    incentive: float

    def __post_init__(self) -> None:
        if any(v not in (0, 1) for v in self.topic):
            raise ValueError("topic must be a binary vector")
        if self.incentive < 0:
            raise ValueError("incentive must be non-negative")


@dataclass(frozen=True)
class UserAttributes:
    """A user's binary interest vector and minimum acceptable reward."""

    interest: tuple[int, ...]
    minimum: float

    def __post_init__(self) -> None:
        if any(v not in (0, 1) for v in self.interest):
            raise ValueError("interest must be a binary vector")
        if self.minimum < 0:
            raise ValueError("minimum must be non-negative")


@dataclass(frozen=True)
class PropagationConfig:
    """Diffusion model choice, base parameters and worker budget.

    ``p0_range`` / ``theta0_range`` give the interval the base probability /
    base threshold is drawn from once per simulation run (a point mass when
    both ends coincide); ``per_user_base_draw`` switches to independent
    per-user draws instead of one shared value per run.
    """

    model: str = "ic"
    q: int = 2000
    p0_range: tuple[float, float] = (0.1, 0.5)
    theta0_range: tuple[float, float] = (0.5, 0.9)
    i_max1: float = 3.0
    i_max2: float = 1.5
    similarity_fn: str = "cosine"
    attraction_fn: str = "tanh"
    seeds_count_toward_budget: bool = True
    per_user_base_draw: bool = False

    def __post_init__(self) -> None:
        if self.model not in _MODELS:
            raise ValueError(f"model must be one of {_MODELS}")
        if self.similarity_fn not in _SIMILARITIES:
            raise ValueError(f"similarity_fn must be one of {_SIMILARITIES}")
        if self.attraction_fn not in _ATTRACTIONS:
            raise ValueError(f"attraction_fn must be one of {_ATTRACTIONS}")
        for name, (lo, hi) in (("p0_range", self.p0_range), ("theta0_range", self.theta0_range)):
            if not (0.0 < lo <= hi <= 1.0):
                raise ValueError(f"{name} must satisfy 0 < low <= high <= 1")
        if self.i_max1 < 1 or self.i_max2 < 1:
            raise ValueError("factor maxima must be >= 1")
        min_q = 1 if self.seeds_count_toward_budget else 0
        if self.q < min_q:
            raise ValueError(f"budget q must be >= {min_q}")


@dataclass(frozen=True)
class SpreadResult:
    """One propagation realization: who accepted, in activation order."""

    activated: tuple[int, ...]
    stop_reason: str

    @property
    def workers(self) -> int:
        return len(self.activated)


@dataclass(frozen=True)
class ActivationEstimate:
    """Monte-Carlo acceptance probabilities per user.

    ``frequency`` only stores users activated in at least one run; seeds
    always carry frequency 1.  ``budget_fraction`` is the share of runs
    that stopped on the worker budget.
    """

    frequency: Mapping[int, float]
    runs: int
    budget_fraction: float

    def p(self, user: int) -> float:
        return self.frequency.get(user, 0.0)


# -- acceptance factors ------------------------------------------------------


def influence_increase(x: float, i_max: float) -> float:
    """Concave boost curve: 1 at x=0, i_max at x=1, diminishing returns."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"stimulus x must lie in [0, 1], got {x}")
    if i_max < 1.0:
        raise ValueError("i_max must be >= 1")
    return (i_max - 1.0) * math.sqrt(1.0 - (1.0 - x) ** 2) + 1.0


def _cosine(a: Sequence[int], b: Sequence[int]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def _jaccard(a: Sequence[int], b: Sequence[int]) -> float:
    inter = sum(1 for x, y in zip(a, b) if x and y)
    union = sum(1 for x, y in zip(a, b) if x or y)
    if union == 0:
        return 0.0
    return inter / union


def topical_interest(
    task: Task, user: UserAttributes, i_max1: float, similarity_fn: str = "cosine"
) -> float:
    """Boost from the match between the task topic and the user's interests."""
    if len(task.topic) != len(user.interest):
        raise ValueError("topic and interest vectors must share the universe size")
    if similarity_fn == "cosine":
        sim = _cosine(task.topic, user.interest)
    elif similarity_fn == "jaccard":
        sim = _jaccard(task.topic, user.interest)
    else:
        raise ValueError(f"similarity_fn must be one of {_SIMILARITIES}")
    return influence_increase(sim, i_max1)


def incentive_attraction(
    task: Task, user: UserAttributes, i_max2: float, attraction_fn: str = "tanh"
) -> float:
    """Boost from the reward exceeding the user's minimum expectation.

    A reward below the minimum contributes nothing (boost 1); above it the
    attraction saturates at 1 via tanh, or via a clamped linear ramp when
    configured.
    """
    if task.incentive < user.minimum:
        attraction = 0.0
    elif attraction_fn == "tanh":
        attraction = math.tanh(task.incentive - user.minimum)
    elif attraction_fn == "linear":
        attraction = min(max(task.incentive - user.minimum, 0.0), 1.0)
    else:
        raise ValueError(f"attraction_fn must be one of {_ATTRACTIONS}")
    return influence_increase(attraction, i_max2)


def acceptance_probability_ic(p0: float, factors: Sequence[float]) -> float:
    """Cascade acceptance probability: min(p0 * product of boosts, 1)."""
    if not 0.0 < p0 <= 1.0:
        raise ValueError("p0 must lie in (0, 1]")
    prod = p0
    for f in factors:
        if f < 1.0:
            raise ValueError("factors must be >= 1")
        prod *= f
    return min(prod, 1.0)


def acceptance_threshold_lt(theta0: float, factors: Sequence[float]) -> float:
    """Threshold-model activation threshold: theta0 / product of boosts."""
    if not 0.0 < theta0 <= 1.0:
        raise ValueError("theta0 must lie in (0, 1]")
    prod = 1.0
    for f in factors:
        if f < 1.0:
            raise ValueError("factors must be >= 1")
        prod *= f
    return theta0 / prod


FactorMap = Mapping[int, tuple[float, ...]]


def acceptance_factors(
    task: Task, attributes: Mapping[int, UserAttributes], config: PropagationConfig
) -> dict[int, tuple[float, float]]:
    """Per-user (topical, incentive) boost pairs for a task.

    Users absent from ``attributes`` receive no boost during spread (their
    acceptance probability stays at the base value).
    """
    return {
        user: (
            topical_interest(task, attrs, config.i_max1, config.similarity_fn),
            incentive_attraction(task, attrs, config.i_max2, config.attraction_fn),
        )
        for user, attrs in attributes.items()
    }


# -- deterministic per-edge randomness ----------------------------------------

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xBF58476D1CE4E5B9)
_MIX3 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53


def _hash_uniforms(key, idx: np.ndarray) -> np.ndarray:
    """Uniforms in [0, 1) keyed by (run key, index), order-independent.

    splitmix64-style finalizer; uint64 arithmetic wraps mod 2**64.  ``key``
    may be a scalar or a column vector of keys (one row per run).
    """
    z = (idx.astype(np.uint64) + np.uint64(1)) * _MIX1 + key
    z = (z ^ (z >> np.uint64(30))) * _MIX2
    z = (z ^ (z >> np.uint64(27))) * _MIX3
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _U53


def _edge_positions(indptr: np.ndarray, frontier: np.ndarray) -> np.ndarray:
    """Positions into the CSR ``indices`` array of all edges out of ``frontier``."""
    starts = indptr[frontier]
    counts = indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    return np.repeat(starts, counts) + offsets


# -- spread engine (dense index space) ----------------------------------------


@dataclass
class _Engine:
    """Graph arrays plus per-user factor products, shared across runs."""

    graph: SocialGraph
    factor_prod: np.ndarray  # product of acceptance boosts per dense user
    config: PropagationConfig

    @classmethod
    def build(
        cls, graph: SocialGraph, factors: FactorMap, config: PropagationConfig
    ) -> "_Engine":
        fp = np.ones(graph.node_count, dtype=np.float64)
        for user, fs in factors.items():
            if user not in graph:
                continue
            prod = 1.0
            for f in fs:
                if f < 1.0:
                    raise ValueError(f"factor {f} for user {user} is < 1")
                prod *= f
            fp[graph.dense_index(user)] = prod
        return cls(graph, fp, config)

    def budget_limit(self, n_seeds: int) -> int:
        if self.config.seeds_count_toward_budget:
            if n_seeds > self.config.q:
                raise ValueError(
                    f"{n_seeds} seeds exceed the worker budget q={self.config.q}"
                )
            return self.config.q
        return self.config.q + n_seeds

    @property
    def inv_degree(self) -> np.ndarray:
        cached = getattr(self, "_inv_degree_cache", None)
        if cached is None:
            cached = np.zeros(self.graph.node_count, dtype=np.float64)
            np.divide(1.0, self.graph.degrees, out=cached, where=self.graph.degrees > 0)
            self._inv_degree_cache = cached
        return cached

    def acceptance_probs(self, p0: np.ndarray | float) -> np.ndarray:
        return np.minimum(p0 * self.factor_prod, 1.0)

    def thresholds(self, theta0: np.ndarray | float) -> np.ndarray:
        return theta0 / self.factor_prod

    def run(
        self,
        seeds_dense: np.ndarray,
        base: np.ndarray | float,
        run_key: np.uint64,
        order: Optional[list[int]] = None,
    ) -> tuple[np.ndarray, bool]:
        """One realization. Returns (active mask, budget-stopped).

        ``base`` is the run's p0 (IC) or theta0 (LT) value, scalar or
        per-user vector.  ``order`` collects dense indices in activation
        order when a caller needs it.
        """
        n = self.graph.node_count
        active = np.zeros(n, dtype=bool)
        active[seeds_dense] = True
        if order is not None:
            order.extend(int(u) for u in seeds_dense)
        limit = self.budget_limit(len(seeds_dense))
        activated = len(seeds_dense)
        if activated >= limit:
            return active, True

        indptr, indices = self.graph.indptr, self.graph.indices
        frontier = np.sort(seeds_dense)
        if self.config.model == "ic":
            probs = self.acceptance_probs(base)
            while frontier.size:
                pos = _edge_positions(indptr, frontier)
                if pos.size == 0:
                    return active, False
                targets = indices[pos]
                hits = (_hash_uniforms(run_key, pos) < probs[targets]) & ~active[targets]
                if not hits.any():
                    return active, False
                qualifiers = np.unique(targets[hits])
                frontier, stopped = self._admit(active, qualifiers, activated, limit, order)
                if stopped:
                    return active, True
                activated += frontier.size
        else:
            taus = self.thresholds(base)
            inv_deg = self.inv_degree
            weight = np.zeros(n, dtype=np.float64)
            while frontier.size:
                pos = _edge_positions(indptr, frontier)
                targets = indices[pos]
                np.add.at(weight, targets, inv_deg[targets])
                qualifiers = np.flatnonzero(~active & (weight + 1e-12 >= taus))
                if qualifiers.size == 0:
                    return active, False
                frontier, stopped = self._admit(active, qualifiers, activated, limit, order)
                if stopped:
                    return active, True
                activated += frontier.size
        return active, False

    @staticmethod
    def _admit(
        active: np.ndarray,
        qualifiers: np.ndarray,
        activated: int,
        limit: int,
        order: Optional[list[int]],
    ) -> tuple[np.ndarray, bool]:
        """Admit round qualifiers in ascending id order, stopping at the budget."""
        remaining = limit - activated
        if qualifiers.size >= remaining:
            taken = qualifiers[:remaining]
            active[taken] = True
            if order is not None:
                order.extend(int(u) for u in taken)
            return taken, True
        active[qualifiers] = True
        if order is not None:
            order.extend(int(u) for u in qualifiers)
        return qualifiers, False

    def _edge_groups(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Edge arrays grouped by target, cached: (src, perm, group starts, targets)."""
        cached = getattr(self, "_edge_groups_cache", None)
        if cached is None:
            indptr, indices = self.graph.indptr, self.graph.indices
            src = np.repeat(
                np.arange(self.graph.node_count, dtype=np.int64), np.diff(indptr)
            )
            perm = np.argsort(indices, kind="stable")
            sorted_targets = indices[perm]
            starts = np.flatnonzero(
                np.r_[True, sorted_targets[1:] != sorted_targets[:-1]]
            )
            cached = (src, perm, starts, sorted_targets[starts])
            self._edge_groups_cache = cached
        return cached

    def run_batch_unbudgeted(
        self, seeds_dense: np.ndarray, bases: list, keys: np.ndarray
    ) -> np.ndarray:
        """Activation counts for many runs at once when the budget cannot bind.

        Consumes exactly the same per-edge uniforms as :meth:`run`, so the
        counts are bit-identical to running the loop version run by run;
        only valid when the budget limit exceeds the node count.
        """
        n = self.graph.node_count
        n_edges = int(self.graph.indptr[-1])
        runs = len(keys)
        counts = np.zeros(n, dtype=np.int64)
        if n_edges == 0:
            counts[seeds_dense] = runs
            return counts
        src, perm, starts, group_targets = self._edge_groups()
        chunk = max(1, min(runs, 2_000_000 // n_edges))
        cfg = self.config
        for lo in range(0, runs, chunk):
            hi = min(runs, lo + chunk)
            c = hi - lo
            base_block = np.asarray(bases[lo:hi], dtype=np.float64)
            if base_block.ndim == 1:
                base_block = base_block[:, None]
            active = np.zeros((c, n), dtype=bool)
            active[:, seeds_dense] = True
            frontier = active.copy()
            if cfg.model == "ic":
                probs = np.minimum(base_block * self.factor_prod[None, :], 1.0)
                uniforms = _hash_uniforms(
                    keys[lo:hi][:, None], np.arange(n_edges, dtype=np.int64)[None, :]
                )
                live = uniforms < probs[:, self.graph.indices]
                live_perm = live[:, perm]
                src_perm = src[perm]
                while frontier.any():
                    hits = frontier[:, src_perm] & live_perm
                    reached = np.logical_or.reduceat(hits, starts, axis=1)
                    new = np.zeros((c, n), dtype=bool)
                    new[:, group_targets] = reached
                    new &= ~active
                    if not new.any():
                        break
                    active |= new
                    frontier = new
            else:
                taus = base_block / self.factor_prod[None, :]
                weight = np.zeros((c, n), dtype=np.float64)
                src_perm = src[perm]
                edge_w = self.inv_degree[self.graph.indices][perm]
                while frontier.any():
                    contrib = frontier[:, src_perm] * edge_w
                    sums = np.add.reduceat(contrib, starts, axis=1)
                    weight[:, group_targets] += sums
                    new = ~active & (weight + 1e-12 >= taus)
                    if not new.any():
                        break
                    active |= new
                    frontier = new
            counts += active.sum(axis=0)
        return counts


def _run_inputs(
    engine: _Engine, runs: int, rng_seed: SeedLike
) -> tuple[np.ndarray, list]:
    """Per-run hash keys and base-parameter draws, all derived up front."""
    rng = np.random.default_rng(as_seedseq(rng_seed))
    keys = rng.integers(0, 2 ** 64, size=runs, dtype=np.uint64)
    cfg = engine.config
    lo, hi = cfg.p0_range if cfg.model == "ic" else cfg.theta0_range
    if cfg.per_user_base_draw:
        bases = [rng.uniform(lo, hi, size=engine.graph.node_count) for _ in range(runs)]
    else:
        bases = list(rng.uniform(lo, hi, size=runs))
    return keys, bases


def _dense_seeds(graph: SocialGraph, seeds: Sequence[int]) -> np.ndarray:
    seen = set()
    dense = []
    for s in seeds:
        if s not in graph:
            raise ValueError(f"seed {s} is not a node of the graph")
        if s in seen:
            raise ValueError(f"duplicate seed {s}")
        seen.add(s)
        dense.append(graph.dense_index(s))
    return np.array(dense, dtype=np.int64)


def run_spread(
    graph: SocialGraph,
    factors: FactorMap,
    seeds: Sequence[int],
    config: PropagationConfig,
    rng_seed: SeedLike,
) -> SpreadResult:
    """Simulate one propagation realization from the given seeds.

    Rounds are synchronous: users activated in the previous round try their
    still-inactive neighbors (IC) or contribute their edge weight (LT);
    round qualifiers are admitted in ascending user-id order and the spread
    stops mid-round the moment the budget is reached.
    """
    engine = _Engine.build(graph, factors, config)
    seeds_dense = _dense_seeds(graph, seeds)
    keys, bases = _run_inputs(engine, 1, rng_seed)
    order: list[int] = []
    _, budget_stopped = engine.run(seeds_dense, bases[0], keys[0], order=order)
    activated = tuple(int(graph.ids[i]) for i in order)
    return SpreadResult(activated, STOP_BUDGET if budget_stopped else STOP_EXHAUSTED)


def _activation_counts(
    engine: _Engine, seeds_dense: np.ndarray, runs: int, rng_seed: SeedLike
) -> tuple[np.ndarray, int]:
    """Dense activation counts over ``runs`` coupled realizations."""
    keys, bases = _run_inputs(engine, runs, rng_seed)
    if engine.budget_limit(len(seeds_dense)) > engine.graph.node_count:
        # budget can never bind: all runs exhaust, so the batched
        # reachability path applies (bit-identical, much faster)
        return engine.run_batch_unbudgeted(seeds_dense, bases, keys), 0
    counts = np.zeros(engine.graph.node_count, dtype=np.int64)
    budget_stops = 0
    for i in range(runs):
        active, stopped = engine.run(seeds_dense, bases[i], keys[i])
        counts += active
        budget_stops += stopped
    return counts, budget_stops


def estimate_activation(
    graph: SocialGraph,
    factors: FactorMap,
    seeds: Sequence[int],
    config: PropagationConfig,
    runs: int,
    rng_seed: SeedLike,
) -> ActivationEstimate:
    """Monte-Carlo per-user activation frequencies over independent runs.

    Each run owns a derived key, so results are identical no matter how
    runs are scheduled; counts aggregate order-independently.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    engine = _Engine.build(graph, factors, config)
    seeds_dense = _dense_seeds(graph, seeds)
    counts, budget_stops = _activation_counts(engine, seeds_dense, runs, rng_seed)
    nz = np.flatnonzero(counts)
    frequency = {int(graph.ids[i]): counts[i] / runs for i in nz}
    return ActivationEstimate(frequency, runs, budget_stops / runs)


def network_spread_flag(
    graph: SocialGraph,
    factors: FactorMap,
    seeds: Sequence[int],
    config: PropagationConfig,
    probe_runs: int = 10,
    rng_seed: SeedLike = 0,
) -> bool:
    """Probe whether propagation from ``seeds`` is budget-sensitive.

    Runs a handful of cheap simulations and reports True when a strict
    majority stop on the worker budget.
    """
    if probe_runs < 1:
        raise ValueError("probe_runs must be >= 1")
    engine = _Engine.build(graph, factors, config)
    seeds_dense = _dense_seeds(graph, seeds)
    _, budget_stops = _activation_counts(engine, seeds_dense, probe_runs, rng_seed)
    return 2 * budget_stops > probe_runs
