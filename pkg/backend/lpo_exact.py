"""
Exact leave-p-out risk of the kNN classifier

For a test point i and a training set e drawn uniformly among the (n-p)-subsets of
the other points, the k nearest neighbors of X_i in e are the first k entries of
sigma_i falling in e. The k-th of them has global rank r with k <= r <= k+p-1, and the
number of ones among the first k-1 follows a hypergeometric law given r. Summing the
misclassification mass over (r, j) gives the error probability of point i without
enumerating any split. The brute-force oracle enumerates all splits in exact rationals.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from scipy.special import gammaln

from backend.config import get_settings
from backend.errors import EnumerationCapError, InfeasibleError, check_feasible
from backend.knn import Dataset, NeighborTable, build_neighbor_table, knn_classify

logger = logging.getLogger(__name__)

Method = Literal["exact_dp", "brute_force", "hoeffding_mc"]


class LpOEstimate(BaseModel):
    value: float = Field(ge=0.0, le=1.0)
    n: int = Field(ge=2)
    p: int = Field(ge=1)
    k: int = Field(ge=1)
    method: Method
    standard_error: Optional[float] = None
    replicates: Optional[int] = None
    exact: Optional[str] = None  # brute force only, as "numerator/denominator"


@dataclass(frozen=True)
class PerPointError:
    index: int
    prob: float
    mass: float  # total DP weight, 1 up to rounding


@dataclass(frozen=True)
class ResamplingFrequencies:
    p_test: Fraction
    neighbor_sum: Fraction
    far_rank_sum: Fraction


def _log_comb(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log C(a, b), -inf outside 0 <= b <= a"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    valid = (b >= 0) & (b <= a)
    out = np.full(np.broadcast(a, b).shape, -np.inf)
    a_b, b_b = np.broadcast_arrays(a, b)
    av, bv = a_b[valid], b_b[valid]
    out[valid] = gammaln(av + 1) - gammaln(bv + 1) - gammaln(av - bv + 1)
    return out


def rank_log_weights(n: int, p: int, k: int) -> np.ndarray:
    """
    log w(r) for r = k .. k+p-1, with w(r) = C(n-1-r, n-p-k) / C(n-1, n-p)

    w(k) is the product of (n-p-t)/(n-1-t) over t < k and
    w(r+1)/w(r) = (p+k-1-r)/(n-1-r).
    """
    t = np.arange(k, dtype=float)
    log_first = float(np.sum(np.log((n - p - t) / (n - 1 - t))))
    r = np.arange(k, k + p - 1, dtype=float)
    steps = np.log((p + k - 1 - r) / (n - 1 - r))
    return log_first + np.concatenate(([0.0], np.cumsum(steps)))


def per_point_error_prob(
    table: NeighborTable,
    labels: np.ndarray,
    i: int,
    k: int,
    p: int,
    log_weights: Optional[np.ndarray] = None,
) -> PerPointError:
    n = table.n
    check_feasible(n, p, k)
    if log_weights is None:
        log_weights = rank_log_weights(n, p, k)

    ordered = np.asarray(labels)[table.order[i]]
    ones_prefix = np.concatenate(([0], np.cumsum(ordered, dtype=np.int64)))

    ranks = np.arange(k, k + p)  # 1-based rank of the k-th neighbor
    n1 = ones_prefix[ranks - 1]
    n0 = (ranks - 1) - n1
    j = np.arange(k)

    log_mass = (
        _log_comb(n1[:, None], j[None, :])
        + _log_comb(n0[:, None], (k - 1 - j)[None, :])
        + log_weights[:, None]
    )
    mass = np.exp(log_mass)

    kth_label = ordered[ranks - 1]
    votes = (2 * (j[None, :] + kth_label[:, None]) > k).astype(np.int8)
    wrong = votes != labels[i]

    prob = math.fsum(mass[wrong].tolist())
    total = math.fsum(mass.ravel().tolist())
    return PerPointError(index=i, prob=min(max(prob, 0.0), 1.0), mass=total)


def lpo_exact(
    dataset: Dataset,
    k: int,
    p: int,
    table: Optional[NeighborTable] = None,
    n_jobs: Optional[int] = None,
) -> LpOEstimate:
    """
    Exact leave-p-out risk of the kNN rule, without enumerating the C(n, p) splits

    For each held-out point, the rank of its k-th training neighbor and the labels of
    the nearer ones have closed-form laws; their misclassification mass is summed.

    Args:
        dataset: Labeled sample of n points
        k: Number of neighbors
        p: Number of points left out, with p + k <= n
        table: Neighbor table of the dataset, built here when omitted
        n_jobs: joblib workers for the per-point loop (LPO_WORKERS when omitted)

    Returns:
        LpOEstimate with method "exact_dp", O(n (k+p) k) work after the table
    """
    n = dataset.n
    check_feasible(n, p, k)
    if table is None:
        table = build_neighbor_table(dataset)
    log_weights = rank_log_weights(n, p, k)
    labels = dataset.labels
    n_jobs = n_jobs or get_settings().workers

    if n_jobs == 1:
        errors = [per_point_error_prob(table, labels, i, k, p, log_weights) for i in range(n)]
    else:
        errors = Parallel(n_jobs=n_jobs)(
            delayed(per_point_error_prob)(table, labels, i, k, p, log_weights) for i in range(n)
        )

    value = math.fsum(e.prob for e in errors) / n
    return LpOEstimate(value=min(max(value, 0.0), 1.0), n=n, p=p, k=k, method="exact_dp")


def lpo_bruteforce(dataset: Dataset, k: int, p: int, cap: Optional[int] = None) -> LpOEstimate:
    """Average test error over every training subset of size n-p, in exact rationals"""
    n = dataset.n
    check_feasible(n, p, k)
    cap = cap or get_settings().enumeration_cap
    splits = math.comb(n, p)
    if splits > cap:
        raise EnumerationCapError(f"C({n}, {p}) = {splits} splits exceeds the cap of {cap}")

    table = build_neighbor_table(dataset)
    labels = dataset.labels
    everyone = set(range(n))
    total = Fraction(0)
    for train in combinations(range(n), n - p):
        test = everyone.difference(train)
        errors = sum(knn_classify(table, labels, train, i, k) != labels[i] for i in test)
        total += Fraction(int(errors), p)

    value = total / splits
    return LpOEstimate(
        value=float(value),
        n=n,
        p=p,
        k=k,
        method="brute_force",
        exact=f"{value.numerator}/{value.denominator}",
    )


def l1o(dataset: Dataset, k: int, table: Optional[NeighborTable] = None) -> LpOEstimate:
    if k > dataset.n - 1:
        raise InfeasibleError(f"leave-one-out needs k <= n-1, got k={k}, n={dataset.n}")
    return lpo_exact(dataset, k, 1, table=table, n_jobs=1)


def l1o_direct(dataset: Dataset, k: int) -> float:
    """Plain leave-one-out loop"""
    if k > dataset.n - 1:
        raise InfeasibleError(f"leave-one-out needs k <= n-1, got k={k}, n={dataset.n}")
    table = build_neighbor_table(dataset)
    labels = dataset.labels
    n = dataset.n
    errors = 0
    for i in range(n):
        train = [j for j in range(n) if j != i]
        errors += int(knn_classify(table, labels, train, i, k) != labels[i])
    return errors / n


def resampling_frequencies(table: NeighborTable, i: int, k: int, p: int) -> ResamplingFrequencies:
    """
    Enumerate every training subset of size n-p and count, for point i,
    P[i in test], sum_j P[i in test, j in V_k^e(X_i)], and the same sum restricted
    to neighbors of global rank in (k, k+p].
    """
    n = table.n
    check_feasible(n, p, k)
    splits = math.comb(n, p)
    if splits > get_settings().enumeration_cap:
        raise EnumerationCapError(f"C({n}, {p}) = {splits} splits exceeds the cap")

    in_test = 0
    neighbor_hits = 0
    far_hits = 0
    for train in combinations(range(n), n - p):
        train_set = set(train)
        if i in train_set:
            continue
        in_test += 1
        chosen = [j for j in table.order[i] if j in train_set][:k]
        neighbor_hits += len(chosen)
        far_hits += sum(1 for j in chosen if k < table.rank[i, j] <= k + p)

    return ResamplingFrequencies(
        p_test=Fraction(in_test, splits),
        neighbor_sum=Fraction(neighbor_hits, splits),
        far_rank_sum=Fraction(far_hits, splits),
    )


def main():
    """Worked example: four points on a line"""
    dataset = Dataset(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0, 0, 1, 1]))
    print("=" * 80)
    print("Exact LpO on (0, 1, 2, 3) with labels (0, 0, 1, 1), k=1, p=2")
    print("=" * 80)
    print(f"DP:          {lpo_exact(dataset, 1, 2).value:.6f}")
    print(f"Brute force: {lpo_bruteforce(dataset, 1, 2).exact}")


if __name__ == "__main__":
    main()
