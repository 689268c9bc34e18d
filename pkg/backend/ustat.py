"""
Leave-p-out as a U-statistic

The LpO estimator is a U-statistic of order m = n-p+1 whose kernel is the
leave-one-out risk on m points. Averaging the block statistic W (mean kernel value
over floor(n/m) disjoint blocks of a permuted sample) over all permutations recovers
it exactly; a seeded Monte-Carlo average over permutations gives an unbiased
incomplete estimate.
"""

import logging
import math
from dataclasses import dataclass
from itertools import permutations
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from backend.config import get_settings
from backend.errors import EnumerationCapError, InfeasibleError, InputError, check_feasible
from backend.knn import Dataset, NeighborTable, build_neighbor_table, knn_classify
from backend.lpo_exact import LpOEstimate, l1o

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockStatistic:
    value: float
    m: int
    r: int
    permutation_seed: Optional[int] = None


def canonical_order(sample: Dataset) -> np.ndarray:
    """Sort key putting rows in lexicographic order of (features, label)"""
    keys = [sample.labels] + [sample.features[:, j] for j in reversed(range(sample.dimension))]
    return np.lexsort(keys)


def kernel_h(sample: Dataset, k: int) -> float:
    """
    Leave-one-out risk of the kNN rule on the m points of the sample.

    The sample is first put in canonical order, so distance ties are broken the same
    way whatever order the points arrive in and the value is a symmetric function of
    its m arguments.
    """
    if k >= sample.n:
        raise InfeasibleError(f"kernel needs k <= m-1, got k={k}, m={sample.n}")
    return l1o(sample.subset(canonical_order(sample)), k).value


def _block_kernel(table: NeighborTable, labels: np.ndarray, block: np.ndarray, k: int) -> float:
    # Kernel on a set of parent indices. Restricting the parent ordering keeps the
    # parent's index tie-break, so the value depends on the block only as a set and
    # averages to the LpO risk. It equals kernel_h on blocks without distance ties.
    members = set(int(j) for j in block)
    errors = 0
    for i in block:
        train = members - {int(i)}
        errors += int(knn_classify(table, labels, train, int(i), k) != labels[i])
    return errors / len(block)


def _check_block_sizes(n: int, k: int, p: int) -> int:
    # p + k <= n is the same as k <= m - 1
    check_feasible(n, p, k)
    return n - p + 1


def hoeffding_block_estimate(
    dataset: Dataset,
    k: int,
    p: int,
    permutation: Sequence[int],
    table: Optional[NeighborTable] = None,
    permutation_seed: Optional[int] = None,
) -> BlockStatistic:
    """Mean kernel value over r = floor(n/m) consecutive blocks; leftover points unused"""
    n = dataset.n
    m = _check_block_sizes(n, k, p)
    perm = np.asarray(permutation, dtype=np.intp)
    if perm.shape[0] != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InputError("permutation must reorder all n indices")
    if table is None:
        table = build_neighbor_table(dataset)

    r = n // m
    values = [_block_kernel(table, dataset.labels, perm[b * m:(b + 1) * m], k) for b in range(r)]
    return BlockStatistic(value=math.fsum(values) / r, m=m, r=r, permutation_seed=permutation_seed)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for replicate `replicate` of a run seeded with `seed`."""
    return np.random.default_rng(np.random.SeedSequence([seed, replicate]))


def _replicate(dataset: Dataset, table: NeighborTable, k: int, p: int, seed: int, index: int) -> float:
    permutation = replicate_rng(seed, index).permutation(dataset.n)
    return hoeffding_block_estimate(dataset, k, p, permutation, table=table).value


def incomplete_ustat_estimate(
    dataset: Dataset,
    k: int,
    p: int,
    replicates: int,
    seed: int,
    n_jobs: Optional[int] = None,
) -> LpOEstimate:
    """
    Average of the block statistic over seeded random permutations

    Args:
        dataset: Labeled sample
        k: Number of neighbors
        p: Leave-out size; blocks hold m = n-p+1 points
        replicates: Number of permutations, at least 2
        seed: Permutation r is drawn from SeedSequence([seed, r])
        n_jobs: joblib workers; the result does not depend on it

    Returns:
        LpOEstimate with method "hoeffding_mc" and the standard error of the mean
    """
    if replicates < 2:
        raise InputError(f"need at least 2 replicates, got {replicates}")
    n = dataset.n
    _check_block_sizes(n, k, p)
    table = build_neighbor_table(dataset)
    n_jobs = n_jobs or get_settings().workers

    if n_jobs == 1:
        values = [_replicate(dataset, table, k, p, seed, i) for i in range(replicates)]
    else:
        values = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(dataset, table, k, p, seed, i) for i in range(replicates)
        )

    values = np.asarray(values)
    mean = math.fsum(values.tolist()) / replicates
    standard_error = float(np.std(values, ddof=1) / math.sqrt(replicates))
    logger.info(
        "Incomplete U-statistic: n=%d p=%d k=%d, %d permutations, mean=%.6f se=%.2e",
        n, p, k, replicates, mean, standard_error,
    )
    return LpOEstimate(
        value=min(max(mean, 0.0), 1.0),
        n=n,
        p=p,
        k=k,
        method="hoeffding_mc",
        standard_error=standard_error,
        replicates=replicates,
    )


def exhaustive_block_average(dataset: Dataset, k: int, p: int, max_n: int = 8) -> float:
    """Mean of the block statistic over all n! permutations; equals the LpO risk"""
    n = dataset.n
    m = _check_block_sizes(n, k, p)
    if n > max_n:
        raise EnumerationCapError(f"{n}! permutations is beyond the limit of n <= {max_n}")
    table = build_neighbor_table(dataset)
    r = n // m

    # the kernel only sees the block as a set
    cache: Dict[Tuple[int, ...], float] = {}
    averages = []
    for perm in permutations(range(n)):
        values = []
        for b in range(r):
            key = tuple(sorted(perm[b * m:(b + 1) * m]))
            if key not in cache:
                cache[key] = _block_kernel(table, dataset.labels, np.asarray(key), k)
            values.append(cache[key])
        averages.append(math.fsum(values) / r)
    return math.fsum(averages) / len(averages)
