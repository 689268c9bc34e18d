"""
Choice of k by minimizing the exact leave-p-out risk

Each curve carries, when available, the confidence radius of the risk gap so the user
can judge how far apart two estimates must be to mean anything.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence

from joblib import Parallel, delayed
from pydantic import BaseModel

from backend.bounds import confidence_gap_bound, is_large_p
from backend.config import get_settings
from backend.errors import InfeasibleError, InputError, check_feasible
from backend.knn import Dataset, build_neighbor_table
from backend.lpo_exact import LpOEstimate, lpo_exact

logger = logging.getLogger(__name__)

DEFAULT_COVERAGE = 0.95


class SelectionCurve(BaseModel):
    n: int
    p: int
    grid: List[int]
    estimates: List[LpOEstimate]
    chosen_k: int
    confidence_x: float
    confidence_radius: List[Optional[float]]
    radius_note: Optional[str] = None

    def values(self) -> List[float]:
        return [estimate.value for estimate in self.estimates]


def coverage_to_x(coverage: float = DEFAULT_COVERAGE) -> float:
    """x with 1 - 2 e^{-x} = coverage"""
    if not 0.0 < coverage < 1.0:
        raise InputError(f"coverage must lie in (0, 1), got {coverage}")
    return math.log(2.0 / (1.0 - coverage))


def argmin_k(grid: Sequence[int], estimates: Sequence[float]) -> int:
    """Smallest k among those attaining the minimum estimate"""
    if not grid:
        raise InputError("the k grid is empty")
    if len(grid) != len(estimates):
        raise InputError("grid and estimates differ in length")
    best = min(estimates)
    return min(k for k, value in zip(grid, estimates) if value == best)


def select_k(
    dataset: Dataset,
    p: int,
    k_grid: Sequence[int],
    gamma_d: Optional[float] = None,
    x: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> SelectionCurve:
    """
    Exact LpO risk over a grid of k and the k that minimizes it

    Args:
        dataset: Labeled sample
        p: Leave-out size shared by every k
        k_grid: Candidate neighbor counts, each with p + k <= n
        gamma_d: Stone constant; without it no confidence radius is attached
        x: Deviation level of the radius, from the default coverage when omitted
        n_jobs: joblib workers over the grid

    Returns:
        SelectionCurve with one estimate per k, ties going to the smallest k
    """
    grid = sorted(set(int(k) for k in k_grid))
    if not grid:
        raise InputError("the k grid is empty")
    n = dataset.n
    for k in grid:
        check_feasible(n, p, k)

    x = coverage_to_x() if x is None else x
    n_jobs = n_jobs or get_settings().workers
    table = build_neighbor_table(dataset)
    if n_jobs == 1:
        estimates = [lpo_exact(dataset, k, p, table=table, n_jobs=1) for k in grid]
    else:
        estimates = Parallel(n_jobs=n_jobs)(
            delayed(lpo_exact)(dataset, k, p, table=table, n_jobs=1) for k in grid
        )

    note = None
    if gamma_d is None:
        radii: List[Optional[float]] = [None] * len(grid)
        note = "no Stone constant supplied"
    elif is_large_p(n, p):
        radii = [None] * len(grid)
        note = "radius holds only for p <= n/2 + 1"
    else:
        radii = [confidence_gap_bound(n, p, k, gamma_d, x) for k in grid]

    chosen = argmin_k(grid, [e.value for e in estimates])
    logger.info("Selected k=%d for n=%d, p=%d over %d candidates", chosen, n, p, len(grid))
    return SelectionCurve(
        n=n,
        p=p,
        grid=grid,
        estimates=estimates,
        chosen_k=chosen,
        confidence_x=x,
        confidence_radius=radii,
        radius_note=note,
    )


def select_k_curves(
    dataset: Dataset,
    p_values: Sequence[int],
    k_grid: Sequence[int],
    gamma_d: Optional[float] = None,
    x: Optional[float] = None,
) -> Dict[int, SelectionCurve]:
    """One curve per p; feasible k values only, p itself stays the user's choice"""
    curves = {}
    for p in p_values:
        feasible = [k for k in k_grid if p + k <= dataset.n]
        if not feasible:
            raise InfeasibleError(f"no k in the grid is feasible for p={p}, n={dataset.n}")
        curves[p] = select_k(dataset, p, feasible, gamma_d=gamma_d, x=x)
    return curves
