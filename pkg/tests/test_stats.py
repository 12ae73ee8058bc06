"""
Tests for the rank-based statistics against worked examples and
brute-force oracles.
"""
import math
from itertools import combinations

import numpy as np
import pytest
from scipy import stats as sps

from src.exceptions import ConfigurationError, RangeError, UsageError
from src.stats import (
    adjust_pairs,
    bh_fdr,
    cliffs_delta,
    cliffs_magnitude,
    dunn_posthoc,
    friedman,
    kruskal_wallis,
    nemenyi,
)


def brute_ranks(values):
    """Mid-ranks by counting."""
    values = list(values)
    return [
        sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) + 1) / 2
        for v in values
    ]


def brute_bh(pvals):
    """Step-up BH: adjusted p_(i) = min_{j >= i} p_(j) m / j, capped at 1."""
    m = len(pvals)
    order = sorted(range(m), key=lambda i: pvals[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, pvals[i] * m / rank)
        adjusted[i] = running
    return adjusted


class TestKruskalWallis:
    """Tests for kruskal_wallis."""

    def test_worked_example(self):
        """Three separated groups of three: H = 7.2 with 2 df."""
        result = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        assert result.statistic == pytest.approx(7.2, abs=1e-12)
        assert result.df == 2
        assert result.pvalue == pytest.approx(math.exp(-3.6), rel=1e-9)

    def test_matches_scipy(self, rng):
        """Random groups, with and without ties."""
        for _ in range(20):
            groups = [rng.integers(0, 6, size=rng.integers(2, 5)).astype(float) for _ in range(3)]
            if len(np.unique(np.concatenate(groups))) == 1:
                continue
            ours = kruskal_wallis(groups)
            ref = sps.kruskal(*groups)
            assert ours.statistic == pytest.approx(ref.statistic, abs=1e-9)
            assert ours.pvalue == pytest.approx(ref.pvalue, abs=1e-9)

    def test_all_identical(self):
        """No variation: H = 0, p = 1."""
        result = kruskal_wallis([[1.0, 1.0], [1.0, 1.0]])
        assert (result.statistic, result.pvalue) == (0.0, 1.0)

    def test_needs_two_groups(self):
        """One group is not a comparison."""
        with pytest.raises(UsageError):
            kruskal_wallis([[1.0, 2.0, 3.0]])


class TestDunn:
    """Tests for dunn_posthoc."""

    def test_matches_brute_force(self, rng):
        """z and p from pooled mid-ranks with the tie-corrected variance."""
        for _ in range(10):
            groups = [rng.integers(0, 5, size=rng.integers(2, 5)).astype(float) for _ in range(3)]
            pooled = np.concatenate(groups)
            n = pooled.size
            ranks = brute_ranks(pooled)
            bounds = np.cumsum([0] + [g.size for g in groups])
            mean_ranks = [np.mean(ranks[bounds[i]:bounds[i + 1]]) for i in range(3)]
            ties = sum(c ** 3 - c for c in np.unique(pooled, return_counts=True)[1])
            spread = n * (n + 1) / 12 - ties / (12 * (n - 1))
            for result, (i, j) in zip(dunn_posthoc(groups), combinations(range(3), 2)):
                var = spread * (1 / groups[i].size + 1 / groups[j].size)
                z = (mean_ranks[i] - mean_ranks[j]) / math.sqrt(var) if var > 0 else 0.0
                assert result.statistic == pytest.approx(z, abs=1e-9)
                assert result.pvalue == pytest.approx(2 * sps.norm.sf(abs(z)), abs=1e-9)

    def test_labels(self):
        """Pairs are named after the groups."""
        pairs = dunn_posthoc([[1, 2], [3, 4], [5, 6]], ["eps", "v", "x0"])
        assert [(c.a, c.b) for c in pairs] == [("eps", "v"), ("eps", "x0"), ("v", "x0")]


class TestBenjaminiHochberg:
    """Tests for bh_fdr."""

    def test_worked_example(self):
        """All of 0.01, 0.02, 0.04 are rejected at 0.05."""
        adjusted, reject = bh_fdr([0.01, 0.02, 0.04], 0.05)
        assert reject.tolist() == [True, True, True]
        assert adjusted.tolist() == pytest.approx([0.03, 0.03, 0.04])

    def test_matches_brute_force(self, rng):
        """Adjusted values agree with the step-up formula."""
        for size in range(1, 13):
            p = rng.random(size)
            adjusted, reject = bh_fdr(p, 0.05)
            assert adjusted.tolist() == pytest.approx(brute_bh(p.tolist()), abs=1e-12)
            assert reject.tolist() == [a <= 0.05 for a in brute_bh(p.tolist())]

    def test_bonferroni_rejections_are_a_subset(self, rng):
        """Anything Bonferroni rejects, BH rejects too."""
        for size in range(1, 13):
            p = np.concatenate([rng.random(size) * 0.02, rng.random(size)])
            _, reject = bh_fdr(p, 0.05)
            bonferroni = p * p.size <= 0.05
            assert np.all(reject[bonferroni])

    def test_invalid_p(self):
        """p-values live in [0, 1]."""
        with pytest.raises(RangeError):
            bh_fdr([0.5, 1.5])

    def test_adjust_pairs(self):
        """Pairs get adjusted_p and reject filled in place."""
        pairs = adjust_pairs(dunn_posthoc([[1, 2, 3], [4, 5, 6], [7, 8, 9]]))
        assert all(c.adjusted_p >= c.pvalue for c in pairs)
        assert all(isinstance(c.reject, bool) for c in pairs)


class TestFriedman:
    """Tests for friedman and nemenyi."""

    def test_worked_example(self):
        """Three replicas with the same ordering of three treatments: 6.0."""
        result = friedman([[1, 2, 3], [1, 2, 3], [1, 2, 3]])
        assert result.statistic == pytest.approx(6.0, abs=1e-12)
        assert result.df == 2

    def test_matches_scipy_without_ties(self, rng):
        """Continuous data has no ties, so no correction is involved."""
        for n in range(2, 13):
            matrix = rng.normal(size=(n, 3))
            ours = friedman(matrix)
            ref = sps.friedmanchisquare(*matrix.T)
            assert ours.statistic == pytest.approx(ref.statistic, abs=1e-9)
            assert ours.pvalue == pytest.approx(ref.pvalue, abs=1e-9)

    def test_missing_cells(self):
        """Every replica needs every treatment."""
        with pytest.raises(UsageError):
            friedman([[1.0, np.nan], [1.0, 2.0]])

    def test_nemenyi_critical_difference(self):
        """CD = q sqrt(k (k+1) / (6 n)) with q = 2.343 for k = 3."""
        matrix = [[1, 2, 3]] * 10
        result = nemenyi(matrix, ["a", "b", "c"])
        assert result.critical_difference == pytest.approx(2.343 * math.sqrt(12 / 60))
        assert result.mean_ranks == {"a": 1.0, "b": 2.0, "c": 3.0}
        by_pair = {(c.a, c.b): c for c in result.pairs}
        assert by_pair[("a", "c")].reject
        assert not by_pair[("a", "b")].reject

    def test_worked_example_pvalue(self):
        """chi2_F = 6 on 2 df gives p = exp(-3)."""
        result = friedman([[1, 2, 3], [1, 2, 3], [1, 2, 3]])
        assert result.pvalue == pytest.approx(math.exp(-3.0), rel=1e-9)

    def test_matches_brute_force_with_ties(self, rng):
        """Within-row mid-ranks by counting, no tie correction."""
        for _ in range(20):
            n, k = int(rng.integers(2, 7)), int(rng.integers(2, 6))
            matrix = rng.integers(0, 3, size=(n, k)).astype(float)
            ranks = np.array([brute_ranks(row) for row in matrix])
            rank_sums = ranks.sum(axis=0)
            expected = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
            result = friedman(matrix)
            assert result.statistic == pytest.approx(max(expected, 0.0), abs=1e-9)
            assert result.pvalue == pytest.approx(sps.chi2.sf(result.statistic, k - 1), abs=1e-12)

    def test_column_permutation_keeps_statistic(self, rng):
        matrix = rng.normal(size=(6, 4))
        assert friedman(matrix[:, [2, 0, 3, 1]]).statistic == pytest.approx(friedman(matrix).statistic, abs=1e-9)

    def test_nemenyi_three_by_three(self):
        """k = 3, n = 3: CD = 2.343 sqrt(12 / 18) = 1.913."""
        result = nemenyi([[1, 2, 3], [1, 2, 3], [1, 2, 3]])
        assert result.critical_difference == pytest.approx(2.343 * math.sqrt(12 / 18), rel=1e-12)
        assert result.critical_difference == pytest.approx(1.913, abs=5e-4)

    def test_nemenyi_identical_columns(self):
        """No pair is significant when every treatment ties."""
        result = nemenyi([[1.0, 1.0, 1.0]] * 5)
        assert not any(c.reject for c in result.pairs)

    def test_nemenyi_other_alpha(self):
        """Only the 0.05 table is available."""
        with pytest.raises(ConfigurationError):
            nemenyi([[1, 2], [2, 1]], alpha=0.01)


class TestMonotoneInvariance:
    """Rank statistics ignore any strictly increasing transform of the data."""

    TRANSFORMS = [np.exp, lambda v: v ** 3 + 2.0 * v, lambda v: 10.0 * v - 4.0]

    def test_kruskal_wallis_and_dunn(self, rng):
        groups = [rng.integers(0, 6, size=4).astype(float) + 0.25 * i for i in range(3)]
        base_h = kruskal_wallis(groups).statistic
        base_z = [c.statistic for c in dunn_posthoc(groups)]
        for transform in self.TRANSFORMS:
            moved = [transform(g) for g in groups]
            assert kruskal_wallis(moved).statistic == pytest.approx(base_h, abs=1e-9)
            assert [c.statistic for c in dunn_posthoc(moved)] == pytest.approx(base_z, abs=1e-9)

    def test_friedman_and_cliff(self, rng):
        matrix = rng.integers(0, 4, size=(5, 3)).astype(float)
        x, y = rng.normal(size=7), rng.normal(size=9)
        base_chi2 = friedman(matrix).statistic
        base_delta = cliffs_delta(x, y)
        for transform in self.TRANSFORMS:
            assert friedman(transform(matrix)).statistic == pytest.approx(base_chi2, abs=1e-9)
            assert cliffs_delta(transform(x), transform(y)) == base_delta


class TestCliff:
    """Tests for cliffs_delta and cliffs_magnitude."""

    def test_worked_example(self):
        """{1, 3} vs {2, 4} gives -0.5."""
        assert cliffs_delta([1, 3], [2, 4]) == -0.5

    def test_matches_brute_force(self, rng):
        """Pair counting."""
        for _ in range(20):
            x = rng.integers(0, 5, size=rng.integers(1, 13))
            y = rng.integers(0, 5, size=rng.integers(1, 13))
            expected = sum((a > b) - (a < b) for a in x for b in y) / (len(x) * len(y))
            assert cliffs_delta(x, y) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("delta, label", [
        (0.1, "negligible"), (-0.2, "small"), (0.4, "medium"), (-0.474, "large"), (1.0, "large"),
    ])
    def test_magnitude(self, delta, label):
        """Thresholds 0.147, 0.33 and 0.474 on |delta|."""
        assert cliffs_magnitude(delta) == label
