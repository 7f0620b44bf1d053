import itertools

import numpy as np
import pytest

from amrforge.smatch import PairCounts, bootstrap_significance, f1_from_counts


def exact_p_value(counts_a, counts_b):
    """Oracle for tiny n: enumerate every ordered resample tuple, each with
    probability n^-n, and accumulate the B >= A indicator."""
    n = len(counts_a)
    hits = 0
    total = 0
    for tup in itertools.product(range(n), repeat=n):
        f1_a = f1_from_counts(
            sum(counts_a[i].matched for i in tup),
            sum(counts_a[i].pred_total for i in tup),
            sum(counts_a[i].gold_total for i in tup),
        ).f1
        f1_b = f1_from_counts(
            sum(counts_b[i].matched for i in tup),
            sum(counts_b[i].pred_total for i in tup),
            sum(counts_b[i].gold_total for i in tup),
        ).f1
        hits += f1_b >= f1_a
        total += 1
    return hits / total


class TestBootstrap:
    def test_identical_systems_never_significant(self):
        counts = [PairCounts(3, 5, 5), PairCounts(4, 4, 6), PairCounts(2, 3, 3)] * 30
        p = bootstrap_significance(counts, counts, resamples=5000, seed=0)
        assert p == 1.0

    def test_strict_dominance_gives_zero(self):
        a = [PairCounts(5, 5, 5) for _ in range(100)]
        b = [PairCounts(i % 4, 5, 5) for i in range(100)]
        assert bootstrap_significance(a, b, resamples=5000, seed=0) == 0.0

    def test_three_sentence_enumeration_oracle(self):
        a = [PairCounts(4, 5, 5), PairCounts(3, 4, 6), PairCounts(5, 6, 5)]
        b = [PairCounts(3, 5, 5), PairCounts(4, 4, 6), PairCounts(4, 6, 5)]
        oracle = exact_p_value(a, b)
        estimate = bootstrap_significance(a, b, resamples=100_000, seed=3)
        assert abs(estimate - oracle) <= 0.01

    def test_three_sentence_oracle_other_direction(self):
        a = [PairCounts(3, 5, 5), PairCounts(2, 4, 6), PairCounts(4, 6, 5)]
        b = [PairCounts(4, 5, 5), PairCounts(4, 4, 6), PairCounts(5, 6, 5)]
        oracle = exact_p_value(a, b)
        estimate = bootstrap_significance(a, b, resamples=100_000, seed=11)
        assert abs(estimate - oracle) <= 0.01

    def test_deterministic_in_seed(self):
        a = [PairCounts(4, 5, 5), PairCounts(2, 4, 4)] * 10
        b = [PairCounts(3, 5, 5), PairCounts(3, 4, 4)] * 10
        p1 = bootstrap_significance(a, b, resamples=2000, seed=9)
        p2 = bootstrap_significance(a, b, resamples=2000, seed=9)
        p3 = bootstrap_significance(a, b, resamples=2000, seed=10)
        assert p1 == p2
        assert p1 != p3 or p1 in (0.0, 1.0)

    def test_monotone_in_margin_under_fixed_seed(self):
        n = 40
        b = [PairCounts(5, 10, 10) for _ in range(n)]
        previous = 1.1
        for margin in range(6):
            a = [PairCounts(5 + margin, 10, 10) for _ in range(n)]
            p = bootstrap_significance(a, b, resamples=3000, seed=4)
            assert p <= previous + 1e-12
            previous = p

    def test_errors(self):
        a = [PairCounts(1, 2, 2)]
        with pytest.raises(ValueError):
            bootstrap_significance(a, a * 2, resamples=10, seed=0)
        with pytest.raises(ValueError):
            bootstrap_significance([], [], resamples=10, seed=0)
