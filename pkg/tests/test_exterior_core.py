"""Tests for multi-index combinatorics and the incidence table."""

from collections import defaultdict
from math import comb

import pytest

from src.services.exterior_core import (
    MultiIndex,
    component_count,
    component_labels,
    enumerate_multi_indices,
    incidence_table,
    rank_of,
)
from src.utils.error_handler import DegreeError


class TestEnumerateMultiIndices:
    """Tests for enumerate_multi_indices."""

    def test_four_dimensional_two_forms_in_lexicographic_order(self):
        """Test that N=4, q=2 yields the six indices in the displayed order."""
        indices = enumerate_multi_indices(4, 2)

        assert [mi.entries for mi in indices] == [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]

    def test_scalar_has_single_empty_index(self):
        """Test that degree 0 has one empty multi-index."""
        for n in range(1, 6):
            assert [mi.entries for mi in enumerate_multi_indices(n, 0)] == [()]

    def test_five_dimensional_curl_has_ten_components(self):
        """Test that the curl of a vector field in R^5 has ten components."""
        assert len(enumerate_multi_indices(5, 2)) == 10

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
    def test_counts_are_binomial_and_symmetric(self, n):
        """Test that C(N,q) indices exist and the count equals that of degree N-q."""
        for q in range(n + 1):
            assert len(enumerate_multi_indices(n, q)) == comb(n, q) == component_count(n, q)
            assert len(enumerate_multi_indices(n, q)) == len(enumerate_multi_indices(n, n - q))

    @pytest.mark.parametrize("q", [-1, 4])
    def test_degree_out_of_range_raises(self, q):
        """Test that degrees outside [0, N] raise DegreeError."""
        with pytest.raises(DegreeError):
            enumerate_multi_indices(3, q)

    def test_rank_is_a_bijection(self):
        """Test that ranks enumerate 0..C(N,q)-1 in order."""
        indices = enumerate_multi_indices(5, 3)
        assert [rank_of(mi) for mi in indices] == list(range(len(indices)))

    def test_labels(self):
        """Test that printable labels follow the component order."""
        assert component_labels(3, 2) == ["(1,2)", "(1,3)", "(2,3)"]


class TestMultiIndex:
    """Tests for the MultiIndex type."""

    def test_rejects_non_increasing_entries(self):
        """Test that entries must strictly increase."""
        with pytest.raises(DegreeError):
            MultiIndex((2, 1), 3)
        with pytest.raises(DegreeError):
            MultiIndex((1, 1), 3)

    def test_rejects_axis_outside_ambient(self):
        """Test that entries must lie in 1..N."""
        with pytest.raises(DegreeError):
            MultiIndex((1, 4), 3)

    def test_insert_sign_counts_smaller_entries(self):
        """Test that insertion sign is (-1) to the number of smaller entries."""
        target, sign = MultiIndex((1, 3), 4).insert(2)
        assert target.entries == (1, 2, 3)
        assert sign == -1

        target, sign = MultiIndex((2, 3), 4).insert(1)
        assert target.entries == (1, 2, 3)
        assert sign == 1

    def test_axes_are_zero_based(self):
        """Test that storage axes are shifted by one."""
        assert MultiIndex((1, 3), 3).axes == (0, 2)


class TestIncidenceTable:
    """Tests for the signed incidence of d."""

    def test_gradient_entries_have_positive_sign(self):
        """Test that N=2, q=0 gives two +1 entries."""
        table = incidence_table(2, 0)

        assert len(table) == 2
        assert all(entry.sign == 1 for entry in table)
        assert [entry.direction for entry in table] == [1, 2]

    def test_four_dimensional_curl_rows(self):
        """Test that N=4, q=1 gives 12 entries with signs (+1, -1) per component."""
        table = incidence_table(4, 1)
        assert len(table) == 12

        by_target = defaultdict(list)
        for entry in table:
            by_target[entry.target_index.entries].append(entry)
        for (m, n), entries in by_target.items():
            # (dv)_(m,n) = d_m v_n - d_n v_m
            assert [(e.direction, e.source_index.entries, e.sign) for e in entries] == [
                (m, (n,), 1),
                (n, (m,), -1),
            ]

    def test_three_dimensional_curl_matches_classical_formula(self):
        """Test that N=3, q=1 reproduces d_m v_n - d_n v_m on each component."""
        table = incidence_table(3, 1)
        terms = {
            (e.target_index.entries, e.direction, e.source_index.entries): e.sign for e in table
        }
        assert terms[((1, 2), 1, (2,))] == 1
        assert terms[((1, 2), 2, (1,))] == -1
        assert terms[((2, 3), 2, (3,))] == 1
        assert terms[((2, 3), 3, (2,))] == -1

    def test_top_degree_is_empty(self):
        """Test that q = N gives an empty table."""
        assert incidence_table(3, 3) == ()

    def test_entries_are_insertions(self):
        """Test that every target equals its source with the direction inserted."""
        for n in range(1, 6):
            for q in range(n):
                for entry in incidence_table(n, q):
                    target, sign = entry.source_index.insert(entry.direction)
                    assert target == entry.target_index
                    assert sign == entry.sign

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_d_squared_vanishes_combinatorially(self, n):
        """Test that signed paths q -> q+2 cancel for every index pair."""
        for q in range(n - 1):
            first = incidence_table(n, q)
            second = incidence_table(n, q + 1)
            totals: dict[tuple, int] = defaultdict(int)
            for a in first:
                for b in second:
                    if b.source_index == a.target_index:
                        # mixed partials commute, so only the unordered direction pair matters
                        key = (
                            a.source_index.entries,
                            b.target_index.entries,
                            frozenset((a.direction, b.direction)),
                        )
                        totals[key] += a.sign * b.sign
            assert all(total == 0 for total in totals.values())
