"""
Differential check of the exact DP against brute-force enumeration

Sweeps small datasets (continuous draws and tie-heavy integer grids, in one and two
dimensions) over every feasible (k, p), and checks the permutation identity of the
U-statistic view on the smallest sizes.
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from backend import __version__
from backend.config import get_settings
from backend.knn import Dataset
from backend.lpo_exact import LpOEstimate, lpo_bruteforce, lpo_exact
from backend.ustat import exhaustive_block_average

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-12
Estimator = Callable[[Dataset, int, int], LpOEstimate]


class OracleCase(BaseModel):
    n: int
    k: int
    p: int
    dimension: int
    dataset_seed: int
    check: str  # "bruteforce" or "permutation"
    expected: float
    actual: float

    @property
    def discrepancy(self) -> float:
        return abs(self.expected - self.actual)


class OracleReport(BaseModel):
    version: str = __version__
    seed: int
    tolerance: float
    cases_checked: int
    permutation_checks: int
    max_abs_discrepancy: float
    failures: List[OracleCase]

    @property
    def passed(self) -> bool:
        return not self.failures


def oracle_dataset(n: int, dimension: int, seed: int, ties: bool = False) -> Dataset:
    """Random labels on continuous draws, or on a small integer grid when `ties` is set"""
    rng = np.random.default_rng(seed)
    if ties:
        features = rng.integers(0, 3, size=(n, dimension)).astype(float)
    else:
        features = rng.standard_normal((n, dimension))
    labels = rng.integers(0, 2, size=n)
    return Dataset(features, labels)


def _draws(n: int, datasets: int, seed: int):
    for index in range(datasets):
        dataset_seed = int(np.random.SeedSequence([seed, n, index]).generate_state(1)[0])
        dimension = 1 + index % 2
        yield dataset_seed, oracle_dataset(n, dimension, dataset_seed, ties=(index % 4) >= 2)


def oracle_sweep(
    n_values: Sequence[int] = tuple(range(4, 11)),
    k_values: Sequence[int] = (1, 2, 3),
    datasets: int = 20,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    permutation_n: Sequence[int] = (5, 6, 7),
    estimator: Estimator = lpo_exact,
    cap: Optional[int] = None,
) -> OracleReport:
    """
    Compare an estimator with brute-force enumeration and with the permutation average

    Args:
        n_values: Sample sizes of the enumeration sweep
        k_values: Neighbor counts; every feasible p is checked for each
        datasets: Random datasets per n, alternating dimension and tie-heavy grids
        seed: Master seed of the dataset draws
        tolerance: Largest accepted absolute discrepancy, for both kinds of check
        permutation_n: Sample sizes of the n!-permutation identity check
        estimator: Implementation under test; the CLI swaps in a faulty one
        cap: Enumeration cap, LPO_ENUMERATION_CAP when omitted

    Returns:
        OracleReport listing every case beyond the tolerance
    """
    failures: List[OracleCase] = []
    worst = 0.0
    cases = 0
    show = get_settings().show_progress

    for n in tqdm(list(n_values), desc="oracle", disable=not show):
        for dataset_seed, dataset in _draws(n, datasets, seed):
            for k in k_values:
                for p in range(1, n - k + 1):
                    expected = lpo_bruteforce(dataset, k, p, cap=cap).value
                    actual = estimator(dataset, k, p).value
                    case = OracleCase(
                        n=n, k=k, p=p, dimension=dataset.dimension, dataset_seed=dataset_seed,
                        check="bruteforce", expected=expected, actual=actual,
                    )
                    cases += 1
                    worst = max(worst, case.discrepancy)
                    if case.discrepancy > tolerance:
                        failures.append(case)

    permutation_checks = 0
    for n in permutation_n:
        for dataset_seed, dataset in _draws(n, 2, seed + 1):
            for k in k_values:
                # block sizes m = n-p+1 in {2, 3} keep several blocks per permutation
                for p in (n - 1, n - 2):
                    if p < 1 or p + k > n:
                        continue
                    expected = exhaustive_block_average(dataset, k, p)
                    actual = estimator(dataset, k, p).value
                    case = OracleCase(
                        n=n, k=k, p=p, dimension=dataset.dimension, dataset_seed=dataset_seed,
                        check="permutation", expected=expected, actual=actual,
                    )
                    permutation_checks += 1
                    worst = max(worst, case.discrepancy)
                    if case.discrepancy > tolerance:
                        failures.append(case)

    logger.info(
        "Oracle: %d brute-force cases, %d permutation checks, max discrepancy %.3e, %d failures",
        cases, permutation_checks, worst, len(failures),
    )
    return OracleReport(
        seed=seed,
        tolerance=tolerance,
        cases_checked=cases,
        permutation_checks=permutation_checks,
        max_abs_discrepancy=worst,
        failures=failures,
    )


def off_by_one_estimator(dataset: Dataset, k: int, p: int) -> LpOEstimate:
    """Evaluates the DP at a wrong leave-out size; the sweep must catch it"""
    shifted = p + 1 if p + 1 + k <= dataset.n else p - 1
    if shifted < 1:
        honest = lpo_exact(dataset, k, p)
        return honest.model_copy(update={"value": 1.0 - honest.value})
    return lpo_exact(dataset, k, shifted).model_copy(update={"p": p})
