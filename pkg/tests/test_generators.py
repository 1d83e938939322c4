import itertools
import random
from fractions import Fraction

import pytest

from conftest import brute_force_min_cost, random_doubly_stochastic
from ordmatch import mechanisms
from ordmatch.core import (
    FractionalMatching,
    InvalidInputError,
    Matching,
    consistent,
    cost,
    fractional_cost,
)
from ordmatch.distortion import min_cost_matching
from ordmatch.generators import (
    boston_instance,
    euclidean_random,
    line_sd_instance,
    tree_adversary_metric,
    tree_instance,
    unlucky_walk,
    unlucky_walk_fractional,
)


def subtree_preference_holds(t):
    """Agents under any non-root vertex v rank v's subtree items first, then
    v's parent, then everything else.
    """
    inst = t.instance
    for v in range(t.n):
        if t.parent[v] < 0:
            continue
        u = t.parent[v]
        ilo, ihi = t.item_range[v]
        inside = set(range(ilo, ihi))
        for agent in range(*t.agent_range[v]):
            ranks = inst.ranks[agent]
            worst_inside = max(ranks[j] for j in inside)
            if ranks[u] < worst_inside:
                return False
            for j in range(t.n):
                if j not in inside and j != u and ranks[j] < ranks[u]:
                    return False
    return True


class TestTreeInstance:
    def test_k1_both_agents_agree(self):
        t = tree_instance(1)
        assert t.instance.prefs == ((0, 1), (0, 1))
        assert t.metric.agent_item(0, 0) == 1
        assert t.metric.agent_item(0, 1) == 3

    def test_k3_agent0_list_and_root_distance(self):
        t = tree_instance(3)
        assert t.instance.prefs[0][:4] == (0, 1, 2, 3)
        assert t.metric.agent_item(0, 7) == 15

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_subtree_preference_claim(self, k):
        assert subtree_preference_holds(tree_instance(k))

    def test_shape(self):
        t = tree_instance(2)
        assert t.children[t.root] == (t.children[t.root][0],)  # one child
        internal = [v for v in range(t.n) if t.children[v] and v != t.root]
        assert all(len(t.children[v]) == 2 for v in internal)


class TestAdversaryMetric:
    def test_k3_chosen_agent_is_unit_distance_to_everything(self):
        t = tree_instance(3)
        adv = tree_adversary_metric(t, 2)
        assert all(adv.agent_item(2, j) == 1 for j in range(8))

    def test_k3_other_agents_zero_or_two(self):
        t = tree_instance(3)
        adv = tree_adversary_metric(t, 2)
        assert adv.agent_item(0, 0) == 0
        assert adv.agent_item(0, 7) == 2

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_consistent_for_every_agent(self, k):
        t = tree_instance(k)
        for i in range(t.n):
            assert consistent(t.instance, tree_adversary_metric(t, i))

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_min_cost_is_one(self, k):
        t = tree_instance(k)
        for i in range(t.n):
            _, opt = min_cost_matching(tree_adversary_metric(t, i))
            assert opt == 1


class TestUnluckyWalk:
    def test_k1_hand_case(self):
        t = tree_instance(1)
        result = unlucky_walk(t, Matching({0: 0, 1: 1}))
        assert result.chosen_agent == 0
        assert result.unlucky == frozenset({1})
        adv = tree_adversary_metric(t, result.chosen_agent)
        assert cost(Matching({0: 0, 1: 1}), adv) == 3

    def test_k2_exhaustive(self):
        t = tree_instance(2)
        for perm in itertools.permutations(range(4)):
            m = Matching.from_permutation(perm)
            result = unlucky_walk(t, m)
            assert len(result.unlucky) == 2
            assert result.chosen_agent not in result.unlucky
            adv = tree_adversary_metric(t, result.chosen_agent)
            assert cost(m, adv) >= 5

    def test_k3_walk_beats_another_agents_optimum(self):
        t = tree_instance(3)
        adv3 = tree_adversary_metric(t, 2)
        m_opt, _ = min_cost_matching(adv3)
        result = unlucky_walk(t, m_opt)
        chosen_metric = tree_adversary_metric(t, result.chosen_agent)
        assert cost(m_opt, chosen_metric) >= 7

    def test_rejects_partial_matching(self):
        t = tree_instance(1)
        with pytest.raises(InvalidInputError):
            unlucky_walk(t, Matching({0: 0}))


class TestUnluckyWalkFractional:
    def test_integral_indicator_subsumed(self):
        t = tree_instance(2)
        for perm in itertools.permutations(range(4)):
            p = FractionalMatching.indicator(Matching.from_permutation(perm), 4)
            result = unlucky_walk_fractional(t, p)
            adv = tree_adversary_metric(t, result.chosen_agent)
            assert fractional_cost(p, adv) >= 3

    def test_k1_uniform_exact(self):
        t = tree_instance(1)
        p = FractionalMatching.uniform(2)
        result = unlucky_walk_fractional(t, p)
        assert result.crossing_weights == (Fraction(1, 2),)
        adv = tree_adversary_metric(t, result.chosen_agent)
        assert fractional_cost(p, adv) == 2

    def test_k2_exact_rsd_marginals(self):
        t = tree_instance(2)
        p = mechanisms.exact_rsd_marginals(t.instance, 4)
        result = unlucky_walk_fractional(t, p)
        adv = tree_adversary_metric(t, result.chosen_agent)
        assert fractional_cost(p, adv) >= 3
        assert all(w >= Fraction(1, 2) for w in result.crossing_weights)

    def test_rejects_substochastic(self):
        t = tree_instance(1)
        p = FractionalMatching(2, ((Fraction(1, 2), Fraction(0)),) * 2)
        with pytest.raises(InvalidInputError):
            unlucky_walk_fractional(t, p)


class TestLineInstance:
    def test_n2_identity_sd_exponential(self):
        inst, metric = line_sd_instance(2)
        sd = mechanisms.serial_dictatorship(inst, (0, 1))
        assert cost(sd, metric) == 3
        assert min_cost_matching(metric)[1] == 1

    def test_n3_costs(self):
        inst, metric = line_sd_instance(3)
        sd = mechanisms.serial_dictatorship(inst, (0, 1, 2))
        assert cost(sd, metric) == 7
        assert min_cost_matching(metric)[1] == 1

    def test_n5_cost_31(self):
        inst, metric = line_sd_instance(5)
        sd = mechanisms.serial_dictatorship(inst, tuple(range(5)))
        assert cost(sd, metric) == 31

    def test_positive_eps_strict_prefs(self):
        inst, metric = line_sd_instance(2, eps=Fraction(1, 4))
        assert inst.prefs[0] == (0, 1)
        assert metric.agent_item(0, 1) == Fraction(5, 4)

    @pytest.mark.parametrize("seed", range(4))
    def test_hypothesis_of_serializability(self, seed):
        rng = random.Random(seed)
        n = rng.randint(2, 6)
        pi = list(range(n))
        sigma = list(range(n))
        rng.shuffle(pi)
        rng.shuffle(sigma)
        inst, _ = line_sd_instance(n, pi, sigma)
        for r in range(n):
            ranks = inst.ranks[pi[r]]
            for s in range(r + 1, n):
                assert ranks[sigma[r]] < ranks[sigma[s]]


class TestBostonInstance:
    def test_k2_shape(self):
        inst, metric, priority = boston_instance(2)
        assert inst.n == 2
        assert priority == (0, 1)
        assert metric.agent_item(0, 1) == 1  # agent at 1 to item at 2
        assert metric.agent_item(0, 0) == 1  # agent at 1 to the far item

    def test_k3_cascade_cost(self):
        inst, metric, priority = boston_instance(3)
        assert inst.n == 4
        outcome = mechanisms.boston(inst, priority)
        assert cost(outcome, metric) == 7  # the cascade costs exactly 2^k - 1
        assert min_cost_matching(metric)[1] == 1

    @pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
    def test_opt_is_one(self, k):
        _, metric, _ = boston_instance(k)
        assert min_cost_matching(metric)[1] == 1

    def test_colocated_agents_share_lists(self):
        inst, _, _ = boston_instance(4)
        # the two agents at position 4 are indices 2 and 3
        assert inst.prefs[2] == inst.prefs[3]


class TestEuclideanRandom:
    def test_deterministic(self):
        assert euclidean_random(4, 2, 7) == euclidean_random(4, 2, 7)
        assert euclidean_random(4, 2, 7) != euclidean_random(4, 2, 8)

    def test_consistent_by_construction(self):
        inst, metric = euclidean_random(4, 2, 7)
        assert consistent(inst, metric)
        metric.check_triangle()

    def test_n1_trivial(self):
        inst, metric = euclidean_random(1, 3, 0)
        assert inst.prefs == ((0,),)


class TestMinCostOracleAgreement:
    @pytest.mark.parametrize("seed", range(6))
    def test_hungarian_equals_brute_force(self, seed):
        n = 2 + seed % 4
        _, metric = euclidean_random(n, 2, seed)
        fast = min_cost_matching(metric)
        slow = brute_force_min_cost(metric)
        assert fast[1] == slow[1]
        assert fast[0] == slow[0]  # lexicographic tie-break agreement
