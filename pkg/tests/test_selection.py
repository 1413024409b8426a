import math

import numpy as np
import pytest

from mcs_recruit.dataset import SocialGraph
from mcs_recruit.mobility import MobilityProfile
from mcs_recruit.propagation import ActivationEstimate, PropagationConfig
from mcs_recruit.selection import (
    SelectionContext,
    SelectionLog,
    basic_selector,
    estimate_coverage,
    fast_selector,
    heuristic_greedy_baseline,
    marginal_utility,
    max_cov_baseline,
    max_degree_baseline,
    naive_fast,
    rank_utility,
)

from _oracles import coverage_bruteforce, greedy_oracle_deterministic

SURE = 50.0  # Poisson rate with 1 - exp(-50) == 1 within 2e-22


def lam(alpha: float) -> float:
    """Rate whose at-least-one-check-in probability is alpha."""
    return -math.log1p(-alpha)


def profile_from_alpha(alpha_by_user, subareas, cycles=1):
    rates = {
        u: {cell: lam(a) for cell, a in cells.items()}
        for u, cells in alpha_by_user.items()
    }
    return MobilityProfile(rates=rates, subarea_count=subareas, cycle_count=cycles)


def sure_config(q=10 ** 6, **kw):
    return PropagationConfig(model="ic", q=q, p0_range=(1.0, 1.0), **kw)


def make_ctx(graph, alpha_by_user, subareas, runs=20, config=None):
    profile = profile_from_alpha(alpha_by_user, subareas)
    return SelectionContext(
        graph=graph,
        factors={},
        profile=profile,
        universe=(subareas, 1, subareas),
        config=config or sure_config(),
        runs=runs,
    )


class TestEstimateCoverage:
    def universe(self):
        return (6, 1, 6)

    def test_zero_alpha_zero_coverage(self):
        profile = profile_from_alpha({0: {}}, 6)
        est = ActivationEstimate({0: 1.0}, runs=1, budget_fraction=0.0)
        assert estimate_coverage(est, profile, self.universe()).fraction == 0.0

    def test_one_sure_user_everywhere(self):
        profile = profile_from_alpha({0: {(i, 0): 1 - 1e-16 for i in range(6)}}, 6)
        est = ActivationEstimate({0: 1.0}, runs=1, budget_fraction=0.0)
        assert estimate_coverage(est, profile, self.universe()).fraction == pytest.approx(
            1.0, abs=1e-9
        )

    def test_two_halves_in_one_cell(self):
        profile = profile_from_alpha({0: {(0, 0): 0.5}, 1: {(0, 0): 0.5}}, 6)
        est = ActivationEstimate({0: 1.0, 1: 1.0}, runs=1, budget_fraction=0.0)
        result = estimate_coverage(est, profile, self.universe())
        assert result.phi[(0, 0)] == pytest.approx(0.75)
        assert result.fraction == pytest.approx(0.75 / 6)

    def test_nonseed_workers_count(self):
        # fractional acceptance of a non-seed user contributes to coverage
        profile = profile_from_alpha({0: {(0, 0): 0.8}, 1: {(1, 0): 0.5}}, 6)
        est = ActivationEstimate({0: 1.0, 1: 0.4}, runs=100, budget_fraction=0.0)
        result = estimate_coverage(est, profile, self.universe())
        assert result.phi[(1, 0)] == pytest.approx(0.2)

    def test_monotone_in_acceptance_probability(self):
        rng = np.random.default_rng(11)
        alpha = {
            u: {(int(c), 0): float(rng.uniform(0.1, 0.9)) for c in rng.choice(6, 3, replace=False)}
            for u in range(4)
        }
        profile = profile_from_alpha(alpha, 6)
        base_p = {u: float(rng.uniform(0.1, 0.8)) for u in range(4)}
        base = estimate_coverage(
            ActivationEstimate(base_p, 1, 0.0), profile, self.universe()
        ).fraction
        assert 0.0 <= base <= 1.0
        for u in range(4):
            raised = dict(base_p)
            raised[u] = min(1.0, base_p[u] + 0.15)
            higher = estimate_coverage(
                ActivationEstimate(raised, 1, 0.0), profile, self.universe()
            ).fraction
            assert higher >= base - 1e-12

    def test_matches_bruteforce_expectation(self):
        rng = np.random.default_rng(10)
        for trial in range(20):
            users = list(range(int(rng.integers(1, 5))))
            alpha = {
                u: {
                    (int(c), 0): float(rng.uniform(0.05, 0.95))
                    for c in rng.choice(6, size=int(rng.integers(1, 5)), replace=False)
                }
                for u in users
            }
            accept = {u: float(rng.uniform(0.0, 1.0)) for u in users}
            profile = profile_from_alpha(alpha, 6)
            est = ActivationEstimate(accept, runs=1, budget_fraction=0.0)
            got = estimate_coverage(est, profile, (6, 1, 6)).fraction
            want = coverage_bruteforce(
                {u: dict(cells) for u, cells in alpha.items()}, accept, 6
            )
            assert got == pytest.approx(want, abs=1e-9)


class TestMarginalUtility:
    def test_isolated_user_covers_k_of_n(self):
        g = SocialGraph([], nodes=[0])
        ctx = make_ctx(g, {0: {(i, 0): 1 - 1e-16 for i in range(2)}}, subareas=8)
        gain = marginal_utility(0, [], ctx, q=10, rng_seed=1)
        assert gain == pytest.approx(2 / 8, abs=1e-9)

    def test_zero_alpha_user_adds_nothing(self):
        g = SocialGraph([], nodes=[0, 1])
        ctx = make_ctx(g, {0: {(0, 0): 0.9}}, subareas=4)
        assert marginal_utility(1, [0], ctx, q=10, rng_seed=1) == pytest.approx(0.0, abs=1e-12)

    def test_duplicate_behavior_is_submodular(self):
        # isolated twins 3 and 4 behave identically; the copy is worth less
        g = SocialGraph([(0, 1)], nodes=[0, 1, 2, 3, 4])
        alpha = {3: {(0, 0): 0.5, (1, 0): 0.5}, 4: {(0, 0): 0.5, (1, 0): 0.5}}
        ctx = make_ctx(g, alpha, subareas=5)
        first = marginal_utility(3, [], ctx, q=10 ** 6, rng_seed=2)
        second = marginal_utility(4, [3], ctx, q=10 ** 6, rng_seed=2)
        assert second <= first + 1e-12
        # exact closed-form check for the deterministic sure-acceptance case
        assert first == pytest.approx(2 * 0.5 / 5, abs=1e-9)
        assert second == pytest.approx(2 * 0.25 / 5, abs=1e-9)

    def test_existing_seed_rejected(self):
        g = SocialGraph([], nodes=[0])
        ctx = make_ctx(g, {}, subareas=2)
        with pytest.raises(ValueError):
            marginal_utility(0, [0], ctx, q=5, rng_seed=0)


def two_community_instance():
    """Two complete triangles, no bridges; acceptance probability 1."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    g = SocialGraph(edges)
    alpha = {
        0: {(0, 0): 0.9},
        1: {(1, 0): 0.8},
        2: {(2, 0): 0.7},
        3: {(3, 0): 0.6, (4, 0): 0.6},
        4: {(4, 0): 0.5},
        5: {(5, 0): 0.4},
    }
    neighbors = {u: set(g.neighbors(u)) for u in g.nodes()}
    return g, alpha, neighbors


class TestBasicSelector:
    def test_p_zero_empty(self):
        g = SocialGraph([(0, 1)])
        ctx = make_ctx(g, {0: {(0, 0): 0.5}}, subareas=2)
        assert basic_selector([0, 1], 0, 5, ctx, 1) == []

    def test_single_useful_candidate_stops_early(self):
        g = SocialGraph([], nodes=[0, 1])
        ctx = make_ctx(g, {0: {(0, 0): 0.9}}, subareas=2)
        assert basic_selector([0, 1], 3, 5, ctx, 1) == [0]

    def test_matches_exhaustive_greedy_oracle(self):
        g, alpha, neighbors = two_community_instance()
        ctx = make_ctx(g, alpha, subareas=6, runs=10)
        got = basic_selector(g.nodes(), 3, 10 ** 6, ctx, 7)
        want = greedy_oracle_deterministic(neighbors, g.nodes(), 3, None, alpha, 6)
        assert got == want

    def test_per_iteration_coverage_logged_non_decreasing(self):
        g, alpha, neighbors = two_community_instance()
        ctx = make_ctx(g, alpha, subareas=6, runs=10)
        log = SelectionLog()
        basic_selector(g.nodes(), 3, 10 ** 6, ctx, 7, log_to=log)
        assert log.iterations  # something was logged
        for rec in log.iterations:
            assert rec.phase == "mc"
            assert rec.achieved + 1e-12 >= rec.baseline

    def test_empty_candidates_rejected(self):
        g = SocialGraph([(0, 1)])
        ctx = make_ctx(g, {}, subareas=2)
        with pytest.raises(ValueError):
            basic_selector([], 1, 5, ctx, 0)


class TestRankUtility:
    def build_ranked_instance(self):
        # candidates 1, 2, 3 with degrees 5, 3, 1 and cosine similarity
        # 0.9, 0.5, 0.1 to the single chosen seed 0
        edges = [(1, x) for x in (10, 11, 12, 13, 14)]
        edges += [(2, x) for x in (15, 16, 17)]
        edges += [(3, 18)]
        g = SocialGraph(edges, nodes=[0])
        rates = {
            0: {(0, 0): 1.0},
            1: {(0, 0): 0.9, (1, 0): math.sqrt(1 - 0.81)},
            2: {(0, 0): 0.5, (2, 0): math.sqrt(1 - 0.25)},
            3: {(0, 0): 0.1, (3, 0): math.sqrt(1 - 0.01)},
        }
        profile = MobilityProfile(rates=rates, subarea_count=30, cycle_count=1)
        return g, profile

    def test_worked_example_ties_at_two(self):
        g, profile = self.build_ranked_instance()
        for u in (1, 2, 3):
            score = rank_utility(u, [0], 0.5, g, profile, candidates=[1, 2, 3])
            assert score == pytest.approx(2.0)

    def test_beta_one_is_degree_order(self):
        g, profile = self.build_ranked_instance()
        scores = {u: rank_utility(u, [0], 1.0, g, profile, candidates=[1, 2, 3]) for u in (1, 2, 3)}
        assert scores[1] > scores[2] > scores[3]

    def test_beta_zero_is_diversity_order(self):
        g, profile = self.build_ranked_instance()
        scores = {u: rank_utility(u, [0], 0.0, g, profile, candidates=[1, 2, 3]) for u in (1, 2, 3)}
        assert scores[3] > scores[2] > scores[1]

    def test_degree_rank_is_scale_free(self):
        from mcs_recruit.selection import _degree_ranks

        rng = np.random.default_rng(12)
        for _ in range(20):
            degrees = rng.integers(0, 50, size=30).astype(np.float64)
            for c in (0.5, 2.0, 17.0):
                assert (_degree_ranks(c * degrees) == _degree_ranks(degrees)).all()

    def test_degree_ties_share_lower_rank(self):
        g = SocialGraph([(1, 10), (1, 11), (2, 12), (2, 13), (3, 14)])
        profile = MobilityProfile(rates={}, subarea_count=2, cycle_count=1)
        # degrees (2, 2, 1): the two 2s share rank 2, the 1 gets rank 1
        s1 = rank_utility(1, [], 1.0, g, profile, candidates=[1, 2, 3])
        s2 = rank_utility(2, [], 1.0, g, profile, candidates=[1, 2, 3])
        s3 = rank_utility(3, [], 1.0, g, profile, candidates=[1, 2, 3])
        assert s1 == s2 == pytest.approx(2.0)
        assert s3 == pytest.approx(1.0)


class TestNaiveFast:
    def test_beta_one_equals_max_degree(self):
        rng = np.random.default_rng(8)
        for trial in range(10):
            n = 15
            edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.3]
            g = SocialGraph(edges, nodes=range(n))
            alpha = {
                u: {(int(rng.integers(0, 4)), 0): float(rng.uniform(0.2, 0.9))}
                for u in range(n)
            }
            profile = profile_from_alpha(alpha, 4)
            assert naive_fast(g.nodes(), 5, 1.0, g, profile) == max_degree_baseline(
                g.nodes(), 5, g
            )

    def test_p_at_least_pool_returns_everyone(self):
        g = SocialGraph([(0, 1), (1, 2)])
        profile = MobilityProfile(rates={}, subarea_count=2, cycle_count=1)
        assert sorted(naive_fast(g.nodes(), 10, 0.5, g, profile)) == [0, 1, 2]

    def test_second_seed_from_opposite_community(self):
        # equal degrees everywhere, so the diversity term decides pick 2
        g = SocialGraph([(0, 1), (2, 3)])
        alpha = {0: {(0, 0): 0.5}, 1: {(0, 0): 0.5}, 2: {(1, 0): 0.5}, 3: {(1, 0): 0.5}}
        profile = profile_from_alpha(alpha, 2)
        seeds = naive_fast(g.nodes(), 2, 0.5, g, profile)
        assert seeds[0] == 0
        assert seeds[1] == 2

    def test_empty_candidates_rejected(self):
        g = SocialGraph([(0, 1)])
        profile = MobilityProfile(rates={}, subarea_count=2, cycle_count=1)
        with pytest.raises(ValueError):
            naive_fast([], 1, 0.5, g, profile)


class TestFastSelector:
    def test_unreachable_budget_equals_naive_fast(self):
        g, alpha, _ = two_community_instance()
        ctx = make_ctx(g, alpha, subareas=6, runs=10)
        fast = fast_selector(g.nodes(), 4, 10 ** 6, 0.6, ctx, 3)
        naive = naive_fast(g.nodes(), 4, 0.6, g, ctx.profile)
        assert fast == naive

    def test_budget_saturation_switches_to_mc_phase(self):
        g, alpha, _ = two_community_instance()
        ctx = make_ctx(g, alpha, subareas=6, runs=10)
        log = SelectionLog()
        # any single seed spreads to its 3-user triangle >= q=2, so the flag
        # flips right after the first pick
        fast_selector(g.nodes(), 2, 2, 0.6, ctx, 3, log_to=log)
        phases = [rec.phase for rec in log.iterations]
        assert phases[0] == "rank"
        assert all(ph == "mc" for ph in phases[1:])
        assert len(phases) >= 2

    def test_phase2_matches_budgeted_greedy_oracle(self):
        # 8 nodes in two squares; q=3 budget-stops any probe, so every pick
        # after the first follows the exact budgeted greedy
        edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4)]
        g = SocialGraph(edges)
        alpha = {
            u: {((u * 2) % 8, 0): 0.7, ((u * 2 + 1) % 8, 0): 0.4} for u in range(8)
        }
        ctx = make_ctx(g, alpha, subareas=8, runs=10)
        log = SelectionLog()
        got = fast_selector(g.nodes(), 4, 3, 0.6, ctx, 5, log_to=log)
        assert [r.phase for r in log.iterations][:1] == ["rank"]
        neighbors = {u: set(g.neighbors(u)) for u in g.nodes()}
        want = greedy_oracle_deterministic(
            neighbors, g.nodes(), 4, 3, alpha, 8, initial=[got[0]]
        )
        assert got == want

    def test_deterministic(self):
        g, alpha, _ = two_community_instance()
        cfg = PropagationConfig(model="ic", q=4, p0_range=(0.3, 0.6))
        ctx = make_ctx(g, alpha, subareas=6, runs=30, config=cfg)
        a = fast_selector(g.nodes(), 3, 4, 0.6, ctx, 42)
        b = fast_selector(g.nodes(), 3, 4, 0.6, ctx, 42)
        assert a == b


class TestBaselines:
    def test_max_degree_star(self):
        g = SocialGraph([(9, i) for i in range(4)])
        assert max_degree_baseline(g.nodes(), 1, g) == [9]

    def test_max_degree_everyone(self):
        g = SocialGraph([(0, 1), (1, 2)])
        assert sorted(max_degree_baseline(g.nodes(), 3, g)) == [0, 1, 2]

    def test_max_degree_tie_by_lowest_id(self):
        g = SocialGraph([(5, 1), (5, 2), (3, 1), (3, 2), (7, 1)])
        # degrees: 5 -> 2, 3 -> 2, 7 -> 1, 1 -> 3, 2 -> 2
        assert max_degree_baseline([5, 3, 7], 2, g) == [3, 5]

    def test_max_cov_singleton_maximizes_alpha_mass(self):
        alpha = {0: {(0, 0): 0.5}, 1: {(0, 0): 0.4, (1, 0): 0.4}, 2: {(2, 0): 0.6}}
        profile = profile_from_alpha(alpha, 4)
        assert max_cov_baseline([0, 1, 2], 1, profile, (4, 1, 4)) == [1]

    def test_max_cov_identical_profiles_submodular(self):
        alpha = {0: {(0, 0): 0.5}, 1: {(0, 0): 0.5}}
        profile = profile_from_alpha(alpha, 2)
        seeds = max_cov_baseline([0, 1], 2, profile, (2, 1, 2))
        assert seeds == [0, 1]
        # the copy's gain halves: verified against the closed form
        first = 0.5
        second = (1 - 0.25) - first
        assert second == pytest.approx(0.25)

    def test_max_cov_disjoint_additivity(self):
        alpha = {0: {(0, 0): 0.5}, 1: {(1, 0): 0.25}}
        profile = profile_from_alpha(alpha, 2)
        seeds = max_cov_baseline([0, 1], 2, profile, (2, 1, 2))
        assert seeds == [0, 1]

    def test_max_cov_zero_utility_stop(self):
        alpha = {0: {(0, 0): 0.5}, 1: {}}
        profile = profile_from_alpha(alpha, 2)
        assert max_cov_baseline([0, 1], 2, profile, (2, 1, 2)) == [0]

    def test_heuristic_greedy_scores(self):
        g = SocialGraph([(0, 1), (0, 2), (0, 3), (4, 1)], nodes=[5])
        alpha = {
            0: {(i, 0): 0.5 for i in range(4)},  # 4 subareas x degree 3 = 12
            4: {(0, 0): 0.5},                    # 1 subarea x degree 1 = 1
            5: {},                               # no check-ins: score 0
        }
        profile = profile_from_alpha(alpha, 6)
        assert heuristic_greedy_baseline([0, 4, 5], 2, g, profile) == [0, 4]

    def test_heuristic_greedy_tie_by_lowest_id(self):
        g = SocialGraph([(1, 10), (1, 11), (1, 12), (2, 13), (2, 14), (2, 15), (3, 16)])
        alpha = {
            1: {(0, 0): 0.5, (1, 0): 0.5, (2, 0): 0.5, (3, 0): 0.5},  # 4 * 3 = 12
            2: {(0, 0): 0.5, (1, 0): 0.5, (2, 0): 0.5, (3, 0): 0.5},  # 12
            3: {(0, 0): 0.5, (1, 0): 0.5, (2, 0): 0.5, (3, 0): 0.5, (4, 0): 0.5},  # 5
        }
        profile = profile_from_alpha(alpha, 6)
        assert heuristic_greedy_baseline([1, 2, 3], 2, g, profile) == [1, 2]
