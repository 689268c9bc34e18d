"""
Datasets, neighbor orderings and the kNN majority-vote classifier

Distances are Euclidean. Equal distances are ordered by increasing point index so
every ordering, and every prediction built on it, is deterministic.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from backend.errors import InputError, InsufficientNeighborsError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabeledPoint:
    features: tuple
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """n labeled points in R^d, features shaped (n, d) and labels in {0, 1}"""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2:
            raise InputError(f"features must be a 2-d array, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise InputError("labels must be a vector with one entry per point")
        if features.shape[0] < 2:
            raise InputError(f"a dataset needs at least 2 points, got {features.shape[0]}")
        if features.shape[1] < 1:
            raise InputError("points need at least one coordinate")
        if not np.all(np.isfinite(features)):
            raise InputError("features contain non-finite coordinates")
        if not np.all(np.isin(labels, (0, 1))):
            raise InputError("labels must be 0 or 1")

        features = features.copy()
        features.setflags(write=False)
        labels = labels.astype(np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_points(cls, points: Sequence[LabeledPoint]) -> "Dataset":
        dims = {len(point.features) for point in points}
        if len(dims) > 1:
            raise InputError(f"points do not share one dimension: {sorted(dims)}")
        return cls(
            features=np.array([point.features for point in points], dtype=float),
            labels=np.array([point.label for point in points]),
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def points(self) -> List[LabeledPoint]:
        return [
            LabeledPoint(tuple(float(v) for v in row), int(label))
            for row, label in zip(self.features, self.labels)
        ]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        """The sub-sample holding the given indices, in the given order."""
        idx = np.asarray(list(indices), dtype=int)
        return Dataset(self.features[idx], self.labels[idx])

    def permuted(self, permutation: Sequence[int]) -> "Dataset":
        return self.subset(permutation)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.features, other.features) and np.array_equal(
            self.labels, other.labels
        )


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """
    Per-point ordering of the other points by distance.

    order[i] lists the n-1 other indices by nondecreasing distance to X_i (ties by
    index). rank[i, j] is the 1-based position of j in order[i]; rank[i, i] is 0.
    """

    order: np.ndarray
    rank: np.ndarray

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def neighbors(self, i: int, k: Optional[int] = None) -> np.ndarray:
        row = self.order[i]
        return row if k is None else row[:k]


def _row_order(features: np.ndarray, i: int) -> np.ndarray:
    sq = np.sum((features - features[i]) ** 2, axis=1)
    if not np.all(np.isfinite(sq)):
        raise InputError(f"distances from point {i} overflow")
    # stable sort keeps increasing index order among equal distances
    candidates = np.delete(np.arange(features.shape[0]), i)
    return candidates[np.argsort(sq[candidates], kind="stable")]


def build_neighbor_table(dataset: Dataset, n_jobs: int = 1) -> NeighborTable:
    """One distance row and one stable sort per point; only the orderings are kept."""
    n = dataset.n
    features = dataset.features
    if n_jobs == 1:
        rows = [_row_order(features, i) for i in range(n)]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_row_order)(features, i) for i in range(n))

    order = np.vstack(rows).astype(np.intp)

    rank = np.zeros((n, n), dtype=np.intp)
    positions = np.arange(1, n)
    for i in range(n):
        rank[i, order[i]] = positions

    order.setflags(write=False)
    rank.setflags(write=False)
    logger.debug("Built neighbor table for n=%d, d=%d", n, dataset.dimension)
    return NeighborTable(order=order, rank=rank)


def vote(ones: int, k: int) -> int:
    """Majority vote: 1 iff ones / k > 0.5, a split vote goes to class 0."""
    return 1 if 2 * ones > k else 0


def knn_classify(
    table: NeighborTable,
    labels: np.ndarray,
    subset: Iterable[int],
    i: int,
    k: int,
) -> int:
    """
    Predict the label of point i from the training points in `subset`

    Scans order[i] and keeps the first k indices lying in the subset. Point i itself
    is never its own neighbor, so it may appear in the subset without effect.
    """
    mask = np.zeros(table.n, dtype=bool)
    mask[np.fromiter(subset, dtype=np.intp)] = True
    in_subset = mask[table.order[i]]
    chosen = table.order[i][in_subset][:k]
    if chosen.shape[0] < k:
        raise InsufficientNeighborsError(
            f"point {i}: only {chosen.shape[0]} training neighbors available for k={k}"
        )
    return vote(int(np.sum(labels[chosen])), k)


def predict(
    dataset: Dataset,
    queries: np.ndarray,
    k: int,
    train: Optional[Iterable[int]] = None,
    chunk_size: int = 4096,
) -> np.ndarray:
    """
    Classify query points with the kNN rule fitted on the dataset, or on the points
    listed in `train` (kept in increasing index order for the tie-break).
    """
    if train is None:
        features, labels = dataset.features, dataset.labels
    else:
        idx = np.unique(np.fromiter(train, dtype=np.intp))
        features, labels = dataset.features[idx], dataset.labels[idx]
    if k > labels.shape[0]:
        raise InsufficientNeighborsError(f"k={k} exceeds the {labels.shape[0]} training points")
    queries = np.asarray(queries, dtype=float)
    if queries.ndim == 1:
        queries = queries.reshape(-1, dataset.dimension)
    if queries.shape[1] != dataset.dimension:
        raise InputError(
            f"queries have dimension {queries.shape[1]}, dataset has {dataset.dimension}"
        )

    predictions = np.empty(queries.shape[0], dtype=np.int8)
    for start in range(0, queries.shape[0], chunk_size):
        block = queries[start:start + chunk_size]
        sq = np.sum((block[:, None, :] - features[None, :, :]) ** 2, axis=2)
        nearest = np.argsort(sq, axis=1, kind="stable")[:, :k]
        ones = labels[nearest].sum(axis=1)
        predictions[start:start + chunk_size] = (2 * ones > k).astype(np.int8)
    return predictions


def main():
    """Small worked example on a line"""
    dataset = Dataset(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0, 0, 1, 1]))
    table = build_neighbor_table(dataset)
    print("=" * 80)
    for i in range(dataset.n):
        print(f"sigma_{i}: {table.neighbors(i).tolist()}")
    print(f"Prediction for x=1 from {{2, 3}}, k=1: {knn_classify(table, dataset.labels, [2, 3], 1, 1)}")
    print("=" * 80)


if __name__ == "__main__":
    main()
