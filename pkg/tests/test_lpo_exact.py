import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.errors import EnumerationCapError, InfeasibleError
from backend.knn import Dataset, build_neighbor_table
from backend.lpo_exact import (
    l1o,
    l1o_direct,
    lpo_bruteforce,
    lpo_exact,
    per_point_error_prob,
    rank_log_weights,
    resampling_frequencies,
)
from tests.conftest import random_dataset


def test_four_points_on_a_line(line4):
    assert lpo_exact(line4, 1, 2).value == pytest.approx(5 / 12, abs=1e-12)
    brute = lpo_bruteforce(line4, 1, 2)
    assert brute.exact == "5/12"
    assert brute.method == "brute_force"


def test_per_point_probabilities(line4, line3):
    table = build_neighbor_table(line4)
    # point 2 errs on training sets {0, 1} and {1, 3}; the tie at distance 1 goes to point 1
    expected = [1 / 3, 1 / 3, 2 / 3, 1 / 3]
    probs = [per_point_error_prob(table, line4.labels, i, 1, 2).prob for i in range(4)]
    assert probs == pytest.approx(expected, abs=1e-12)
    assert sum(probs) / 4 == pytest.approx(5 / 12, abs=1e-12)

    small = build_neighbor_table(line3)
    assert per_point_error_prob(small, line3.labels, 2, 1, 1).prob == pytest.approx(1.0)


def test_mass_sums_to_one():
    dataset = random_dataset(25, 2, seed=1)
    table = build_neighbor_table(dataset)
    for k, p in ((1, 1), (3, 7), (5, 20)):
        for i in range(dataset.n):
            assert per_point_error_prob(table, dataset.labels, i, k, p).mass == pytest.approx(1.0, abs=1e-12)


def test_rank_weights_match_binomials():
    n, p, k = 12, 5, 3
    expected = [math.comb(n - 1 - r, n - p - k) / math.comb(n - 1, n - p) for r in range(k, k + p)]
    assert np.exp(rank_log_weights(n, p, k)) == pytest.approx(expected, rel=1e-12)


def test_leave_one_out_reduction(line3):
    assert l1o(line3, 1).value == pytest.approx(1 / 3)
    assert l1o_direct(line3, 1) == pytest.approx(1 / 3)
    dataset = random_dataset(40, 2, seed=9, ties=True)
    for k in (1, 2, 5):
        assert lpo_exact(dataset, k, 1).value == l1o_direct(dataset, k)


@pytest.mark.parametrize("seed", range(100))
def test_leave_one_out_is_bit_identical_to_the_direct_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    k = int(rng.integers(1, min(n - 1, 9) + 1))
    dataset = random_dataset(n, int(rng.integers(1, 4)), seed=seed, ties=seed % 3 == 0)
    assert lpo_exact(dataset, k, 1).value == l1o_direct(dataset, k)


def test_all_labels_equal_gives_zero():
    dataset = Dataset(np.random.default_rng(0).standard_normal((15, 2)), np.ones(15, dtype=int))
    assert lpo_exact(dataset, 3, 6).value == 0.0
    assert lpo_bruteforce(dataset.subset(range(8)), 2, 3).value == 0.0


def test_infeasible_and_cap(line4):
    with pytest.raises(InfeasibleError):
        lpo_exact(line4, 2, 3)
    with pytest.raises(InfeasibleError):
        l1o(line4, 4)
    with pytest.raises(EnumerationCapError):
        lpo_bruteforce(random_dataset(30, 1, seed=0), 1, 15, cap=1000)


def test_parallel_equals_serial():
    dataset = random_dataset(60, 2, seed=4)
    assert lpo_exact(dataset, 3, 20, n_jobs=1).value == lpo_exact(dataset, 3, 20, n_jobs=2).value


def test_resampling_frequencies_confirm_test_membership_factor():
    dataset = random_dataset(8, 1, seed=2)
    table = build_neighbor_table(dataset)
    n, p, k = 8, 3, 2
    freq = resampling_frequencies(table, 0, k, p)
    assert freq.p_test == Fraction(p, n)
    assert freq.neighbor_sum == Fraction(k * p, n)
    assert freq.far_rank_sum == freq.neighbor_sum * Fraction(p - 1, n - 1)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=4, max_value=8),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=10_000),
    st.booleans(),
)
def test_dp_matches_enumeration(n, k, seed, ties):
    dataset = random_dataset(n, 1 + seed % 2, seed, ties=ties)
    for p in range(1, n - k + 1):
        assert lpo_exact(dataset, k, p).value == pytest.approx(lpo_bruteforce(dataset, k, p).value, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_relabeling_symmetry_for_odd_k(seed):
    # with k odd a vote never splits, so flipping every label flips every prediction
    dataset = random_dataset(20, 2, seed)
    flipped = Dataset(dataset.features, 1 - dataset.labels)
    for k, p in ((1, 4), (3, 9)):
        assert lpo_exact(dataset, k, p).value == pytest.approx(lpo_exact(flipped, k, p).value, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_invariant_under_reindexing_without_ties(seed):
    dataset = random_dataset(18, 2, seed)
    perm = np.random.default_rng(seed).permutation(dataset.n)
    assert lpo_exact(dataset, 2, 5).value == pytest.approx(lpo_exact(dataset.permuted(perm), 2, 5).value, abs=1e-12)
