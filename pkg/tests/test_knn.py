from dataclasses import fields

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.errors import InputError, InsufficientNeighborsError
from backend.knn import Dataset, LabeledPoint, build_neighbor_table, knn_classify, predict, vote
from tests.conftest import random_dataset


def test_order_on_a_line(line3):
    table = build_neighbor_table(line3)
    assert list(table.order[0]) == [1, 2]
    # equidistant flanks: the smaller index comes first
    assert list(table.order[1]) == [0, 2]
    assert list(table.order[2]) == [1, 0]


def test_rank_inverts_order():
    table = build_neighbor_table(random_dataset(50, 2, seed=3))
    for i in range(table.n):
        assert table.rank[i, i] == 0
        for position, j in enumerate(table.order[i], start=1):
            assert table.rank[i, j] == position


def test_table_keeps_only_orderings():
    table = build_neighbor_table(random_dataset(30, 2, seed=1))
    assert [field.name for field in fields(table)] == ["order", "rank"]
    assert table.order.shape == (30, 29)


def test_parallel_table_matches_serial():
    dataset = random_dataset(40, 3, seed=11, ties=True)
    serial = build_neighbor_table(dataset)
    parallel = build_neighbor_table(dataset, n_jobs=2)
    assert np.array_equal(serial.order, parallel.order)
    assert np.array_equal(serial.rank, parallel.rank)


def test_vote_splits_go_to_zero():
    assert vote(1, 2) == 0
    assert vote(2, 3) == 1
    assert vote(1, 1) == 1


def test_single_neighbor_with_label_one():
    dataset = Dataset(np.array([0.0, 1.0]), np.array([0, 1]))
    table = build_neighbor_table(dataset)
    assert knn_classify(table, dataset.labels, [1], 0, 1) == 1


def test_classify_from_subset(line4):
    table = build_neighbor_table(line4)
    # test point x=1 trained on x=2 and x=3
    assert knn_classify(table, line4.labels, {2, 3}, 1, 1) == 1


def test_too_few_neighbors(line4):
    table = build_neighbor_table(line4)
    with pytest.raises(InsufficientNeighborsError):
        knn_classify(table, line4.labels, {2}, 1, 2)


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.array([0.0, np.inf]), np.array([0, 1]))
    with pytest.raises(InputError):
        Dataset(np.array([0.0, 1.0]), np.array([0, 2]))
    with pytest.raises(InputError):
        Dataset(np.array([0.0]), np.array([1]))
    with pytest.raises(InputError):
        Dataset.from_points([LabeledPoint((0.0,), 0), LabeledPoint((0.0, 1.0), 1)])


def test_dataset_is_read_only(line4):
    with pytest.raises(ValueError):
        line4.features[0, 0] = 5.0


def test_subset_and_points(line4):
    sub = line4.subset([3, 0])
    assert sub.n == 2
    assert [point.label for point in sub.points()] == [1, 0]
    assert Dataset.from_points(line4.points()) == line4


def test_predict_matches_classify_on_held_out_point():
    dataset = random_dataset(30, 2, seed=5)
    table = build_neighbor_table(dataset)
    train = list(range(29))
    reduced = dataset.subset(train)
    for k in (1, 3, 5):
        expected = knn_classify(table, dataset.labels, train, 29, k)
        assert predict(reduced, dataset.features[29:], k)[0] == expected


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=4))
def test_table_is_deterministic(seed, d):
    dataset = random_dataset(12, d, seed, ties=True)
    first = build_neighbor_table(dataset)
    second = build_neighbor_table(Dataset(dataset.features.copy(), dataset.labels.copy()))
    assert np.array_equal(first.order, second.order)


def naive_classify(dataset, train, i, k):
    """Sort the training points by (distance, index) and vote"""
    candidates = sorted(
        (float(np.sum((dataset.features[j] - dataset.features[i]) ** 2)), j) for j in train if j != i
    )
    ones = sum(int(dataset.labels[j]) for _, j in candidates[:k])
    return 1 if 2 * ones > k else 0


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_classify_matches_sort_and_vote(data):
    n = data.draw(st.integers(min_value=3, max_value=15))
    d = data.draw(st.integers(1, 2))
    dataset = random_dataset(n, d, data.draw(st.integers(0, 10_000)), ties=data.draw(st.booleans()))
    i = data.draw(st.integers(0, n - 1))
    train = data.draw(st.sets(st.integers(0, n - 1).filter(lambda j: j != i), min_size=1))
    k = data.draw(st.integers(1, len(train)))
    table = build_neighbor_table(dataset)
    assert knn_classify(table, dataset.labels, train, i, k) == naive_classify(dataset, train, i, k)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=20))
def test_table_follows_a_relabeling_of_the_points(seed, n):
    dataset = random_dataset(n, 2, seed)
    perm = np.random.default_rng(seed).permutation(n)
    table = build_neighbor_table(dataset)
    moved = build_neighbor_table(dataset.subset(perm))
    # point a of the moved dataset is point perm[a] of the original
    for a in range(n):
        assert np.array_equal(perm[moved.order[a]], table.order[perm[a]])
