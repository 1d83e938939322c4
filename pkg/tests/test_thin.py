import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_doubly_stochastic, random_profile
from ordmatch.core import (
    FractionalMatching,
    InvalidInputError,
    Matching,
    cost,
    fractional_cost,
)
from ordmatch.generators import euclidean_random, line_sd_instance
from ordmatch.mechanisms import exact_rsd_marginals, serial_dictatorship
from ordmatch.thin import (
    INFINITE,
    bvn_decompose,
    cut_metric,
    cut_ratio,
    cycle_counterexample,
    derandomized_rsd,
    hall_round,
    thin_search,
    thinness,
)


class TestThinness:
    def test_indicator_beta_one(self):
        for seed in range(5):
            rng = random.Random(seed)
            n = rng.randint(1, 5)
            perm = list(range(n))
            rng.shuffle(perm)
            m = Matching.from_permutation(perm)
            rep = thinness(FractionalMatching.indicator(m, n), m)
            assert rep.beta == 1

    def test_cycle_even_matching(self):
        cx = cycle_counterexample(1, Fraction(1, 2))
        rep = thinness(cx.p, cx.alt_matching)
        assert rep.beta == 2
        assert cut_ratio(cx.p, cx.alt_matching, rep.witness_cut) == 2

    def test_cycle_q_quarter(self):
        cx = cycle_counterexample(1, Fraction(1, 4))
        assert thinness(cx.p, cx.q_matching).beta == 4

    def test_infinite_on_disjoint_support(self):
        p = FractionalMatching.indicator(Matching({0: 0, 1: 1}), 2)
        off_support = Matching({0: 1, 1: 0})
        rep = thinness(p, off_support)
        assert rep.beta == INFINITE
        assert cut_ratio(p, off_support, rep.witness_cut) == INFINITE

    def test_witness_attains_beta(self):
        rng = random.Random(3)
        for _ in range(10):
            n = rng.randint(2, 4)
            p = random_doubly_stochastic(n, rng)
            perm = list(range(n))
            rng.shuffle(perm)
            m = Matching.from_permutation(perm)
            rep = thinness(p, m)
            assert cut_ratio(p, m, rep.witness_cut) == rep.beta

    def test_fundamental_cut_path_matches_full_enumeration(self):
        rng = random.Random(4)
        for _ in range(10):
            n = rng.randint(2, 4)
            p = random_doubly_stochastic(n, rng)
            dec = bvn_decompose(p)
            m = dec.terms[0][1]  # support of m is inside supp(p)
            fast = thinness(p, m)
            # brute force over all cuts
            best = None
            for mask in range(1, 1 << (2 * n - 1)):
                weight = Fraction(0)
                count = 0
                for i in range(n):
                    for j in range(n):
                        if (mask >> i & 1) != (mask >> (n + j) & 1):
                            weight += p.p[i][j]
                            if m.assign.get(i) == j:
                                count += 1
                if weight:
                    ratio = Fraction(count) / weight
                    best = ratio if best is None else max(best, ratio)
                else:
                    assert count == 0
            assert fast.beta == best

    def test_cap_refused_off_support(self):
        n = 13  # 2n = 26 > default cap
        perm = list(range(n))
        p = FractionalMatching.indicator(Matching.from_permutation(perm), n)
        off = Matching.from_permutation(perm[1:] + perm[:1])
        with pytest.raises(InvalidInputError):
            thinness(p, off)


class TestCutMetricBridge:
    """Cut pseudo-metrics evaluate the two sides of the thinness ratio."""

    def test_costs_reproduce_cut_counts(self):
        rng = random.Random(5)
        for _ in range(5):
            n = rng.randint(2, 4)
            p = random_doubly_stochastic(n, rng)
            perm = list(range(n))
            rng.shuffle(perm)
            m = Matching.from_permutation(perm)
            for mask in range(1 << (2 * n - 1)):
                cut = frozenset(x for x in range(2 * n) if mask >> x & 1)
                d = cut_metric(n, cut)
                crossing = sum(
                    1 for i, j in m.assign.items() if (i in cut) != (n + j in cut)
                )
                weight = sum(
                    p.p[i][j]
                    for i in range(n)
                    for j in range(n)
                    if (i in cut) != (n + j in cut)
                )
                assert cost(m, d) == crossing
                assert fractional_cost(p, d) == weight

    def test_cut_metric_is_metric(self):
        cut_metric(3, frozenset({0, 4})).check_triangle()


class TestHallRound:
    def test_permutation_passthrough(self):
        m = Matching.from_permutation((2, 0, 1))
        assert hall_round(FractionalMatching.indicator(m, 3)) == m

    def test_uniform_any_matching_qualifies(self):
        out = hall_round(FractionalMatching.uniform(4))
        assert out.is_perfect(4)
        assert out == hall_round(FractionalMatching.uniform(4))

    @given(
        st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10**6)
    )
    @settings(max_examples=80, deadline=None)
    def test_never_fails_on_doubly_stochastic(self, n, seed):
        p = random_doubly_stochastic(n, random.Random(seed))
        out = hall_round(p)
        assert out.is_perfect(n)
        threshold = Fraction(1, n * n)
        assert all(p.p[i][j] >= threshold for i, j in out.assign.items())

    def test_cost_bound_on_generating_metric(self):
        rng = random.Random(6)
        inst, metric = euclidean_random(4, 2, 9)
        p = exact_rsd_marginals(inst, 4)
        out = hall_round(p)
        assert cost(out, metric) <= 16 * fractional_cost(p, metric)

    def test_rejects_substochastic(self):
        p = FractionalMatching(2, ((Fraction(1, 2), Fraction(0)),) * 2)
        with pytest.raises(InvalidInputError):
            hall_round(p)

    def test_rounded_matching_is_n_squared_thin(self):
        # the cost bound applied to each cut metric bounds every cut ratio
        rng = random.Random(13)
        for _ in range(12):
            n = rng.randint(1, 5)
            p = random_doubly_stochastic(n, rng)
            out = hall_round(p)
            assert thinness(p, out).beta <= n * n


class TestDerandomizedRsd:
    def test_n1(self):
        inst = euclidean_random(1, 2, 0)[0]
        assert derandomized_rsd(inst).assign == {0: 0}

    def test_line_n3_differs_from_sd_somewhere(self):
        inst, _ = line_sd_instance(3)
        sd = serial_dictatorship(inst, (0, 1, 2))
        assert derandomized_rsd(inst) != sd

    def test_monte_carlo_path(self):
        inst = random_profile(9, random.Random(7))
        out = derandomized_rsd(inst, exact_cap=8, trials=500, seed=1)
        assert out.is_perfect(9)

    def test_distortion_chain_through_marginals(self):
        from ordmatch.distortion import (
            adversarial_distortion,
            adversarial_distortion_fractional,
        )

        rng = random.Random(8)
        for _ in range(4):
            n = rng.randint(2, 4)
            inst = random_profile(n, rng)
            marginals = exact_rsd_marginals(inst, n)
            rounded = adversarial_distortion(inst, hall_round(marginals)).value
            hedged = adversarial_distortion_fractional(inst, marginals).value
            assert rounded <= n * n * hedged


class TestBvn:
    def test_permutation_single_term(self):
        m = Matching.from_permutation((1, 2, 0))
        dec = bvn_decompose(FractionalMatching.indicator(m, 3))
        assert dec.terms == ((Fraction(1), m),)

    def test_four_cycle_unique_two_terms(self):
        cx = cycle_counterexample(1, Fraction(1, 2))
        dec = bvn_decompose(cx.p)
        assert len(dec.terms) == 2
        assert sorted(w for w, _ in dec.terms) == [Fraction(1, 2), Fraction(1, 2)]
        assert {m for _, m in dec.terms} == {cx.q_matching, cx.alt_matching}

    def test_uniform_n3_reassembles(self):
        p = FractionalMatching.uniform(3)
        dec = bvn_decompose(p)
        assert len(dec.terms) >= 3
        assert dec.reassemble() == p

    @given(
        st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10**6)
    )
    @settings(max_examples=60, deadline=None)
    def test_reassembly_exact(self, n, seed):
        p = random_doubly_stochastic(n, random.Random(seed))
        dec = bvn_decompose(p)
        assert dec.reassemble() == p
        assert len(dec.terms) <= n * n - 2 * n + 2
        assert sum(w for w, _ in dec.terms) == 1

    def test_rejects_substochastic(self):
        p = FractionalMatching(2, ((Fraction(1, 2), Fraction(0)),) * 2)
        with pytest.raises(InvalidInputError):
            bvn_decompose(p)


class TestCycleCounterexample:
    def test_k1_structure(self):
        cx = cycle_counterexample(1, Fraction(1, 2))
        assert cx.p.is_doubly_stochastic()
        assert cut_ratio(cx.p, cx.q_matching, cx.cuts[0]) == 2
        assert cut_ratio(cx.p, cx.alt_matching, cx.cuts[0]) == 0

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_distinguished_ratio_is_inverse_q(self, k):
        for q in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)):
            cx = cycle_counterexample(k, q)
            assert cut_ratio(cx.p, cx.q_matching, cx.cuts[0]) == 1 / q

    def test_parallel_repetition_probability(self):
        cx = cycle_counterexample(1, Fraction(1, 8), copies=8)
        assert cx.q_side_sample_probability() == 1 - Fraction(7, 8) ** 8
        assert cx.p.is_doubly_stochastic()
        assert len(cx.cuts) == 8

    def test_components_decompose_independently(self):
        cx = cycle_counterexample(1, Fraction(1, 4), copies=2)
        dec = bvn_decompose(cx.p)
        assert dec.reassemble() == cx.p


class TestThinSearch:
    def test_indicator_found_at_beta_one(self):
        m = Matching.from_permutation((1, 0))
        p = FractionalMatching.indicator(m, 2)
        assert thin_search(p, 1) == m

    def test_four_cycle_beta_two(self):
        cx = cycle_counterexample(1, Fraction(1, 2))
        found = thin_search(cx.p, 2)
        assert found in (cx.q_matching, cx.alt_matching)
        assert found == cx.q_matching  # lexicographically first

    def test_four_cycle_beta_below_two_fails(self):
        cx = cycle_counterexample(1, Fraction(1, 2))
        assert thin_search(cx.p, Fraction(3, 2)) is None

    def test_cap(self):
        p = FractionalMatching.uniform(6)
        with pytest.raises(InvalidInputError):
            thin_search(p, 1)
