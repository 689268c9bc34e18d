"""
Monte-Carlo verification of the leave-p-out bounds

A campaign draws fresh datasets from a DistributionSpec, computes the exact LpO
estimate and the true conditional error of the fitted rule on each, and compares
empirical moments, tails, bias, MSE, stability and Stone counts with every bound.
A check fails when the empirical quantity exceeds its bound by more than three
Monte-Carlo standard errors.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel
from tqdm import tqdm

from backend import __version__
from backend.bounds import (
    bias_bound,
    concentration_tail_large_p,
    concentration_tail_poly,
    concentration_tail_small_p,
    is_large_p,
    mcdiarmid_tail,
    moment_bound_lpo,
    moment_bound_lpo_large_p,
    mse_bound,
    stability_bound,
    stone_gamma,
)
from backend.config import get_settings
from backend.errors import InputError, check_feasible
from backend.knn import Dataset, build_neighbor_table, predict
from backend.lpo_exact import lpo_exact
from evaluation.distributions import DistributionSpec, conditional_error, sample_dataset, sample_points

logger = logging.getLogger(__name__)

TOLERANCE_SE = 3.0
TrueRiskMethod = Literal["auto", "closed_form_1d", "test_set"]


class BoundCheck(BaseModel):
    bound_id: str
    empirical: float
    standard_error: float
    bound: float
    slack_ratio: Optional[float] = None  # bound / empirical
    violated: bool


class TailRow(BaseModel):
    t: float
    empirical: float
    standard_error: float
    bound_id: str
    bound_value: float
    violated: bool


class TailTable(BaseModel):
    n: int
    p: int
    k: int
    replicates: int
    seed: int
    mean_estimate: float
    mean_standard_error: float
    rows: List[TailRow]

    @property
    def violations(self) -> int:
        return sum(row.violated for row in self.rows)


class StabilityResult(BaseModel):
    n: int
    p: int
    k: int
    replicates: int
    seed: int
    frequency: float
    standard_error: float
    bound: float
    violated: bool


class ReplicationReport(BaseModel):
    version: str = __version__
    spec: DistributionSpec
    n: int
    p: int
    k: int
    gamma_d: float
    replicates: int
    seed: int
    q_max: int
    true_risk_method: str
    mean_estimate: float
    mean_true_risk: float
    central_moments: Dict[int, float]
    absolute_central_moments: Dict[int, float]
    tails: List[TailRow]
    bias: float
    bias_standard_error: float
    mse: float
    mse_standard_error: float
    stability_frequency: float
    stability_standard_error: float
    stone_max_in_degree: int
    checks: List[BoundCheck]

    @property
    def violations(self) -> int:
        return sum(check.violated for check in self.checks) + sum(row.violated for row in self.tails)


class CampaignMatrix(BaseModel):
    version: str = __version__
    seed: int
    reports: List[ReplicationReport]

    @property
    def violations(self) -> int:
        return sum(report.violations for report in self.reports)


@dataclass(frozen=True)
class _Replicate:
    estimate: float
    true_risk: float
    disagreement: int
    stone: int


def stone_counter(dataset: Dataset, k: int) -> int:
    """Largest number of points having one given point among their k nearest neighbors"""
    check_feasible(dataset.n, 1, k)
    table = build_neighbor_table(dataset)
    in_degree = np.bincount(table.order[:, :k].ravel(), minlength=dataset.n)
    return int(in_degree.max())


def classifier_disagreement(dataset: Dataset, p: int, k: int, queries: np.ndarray) -> float:
    """Share of queries on which the fits on all n points and on the first n-p disagree"""
    check_feasible(dataset.n, p, k)
    full = predict(dataset, queries, k)
    reduced = predict(dataset, queries, k, train=range(dataset.n - p))
    return float(np.mean(full != reduced))


def _resolve_true_risk(spec: DistributionSpec, method: TrueRiskMethod) -> str:
    if method == "auto":
        return "closed_form_1d" if spec.dimension == 1 else "test_set"
    return method


def _simulate_replicate(
    spec: DistributionSpec,
    n: int,
    p: int,
    k: int,
    seed: int,
    index: int,
    true_risk_method: Optional[str],
    test_size: int,
) -> _Replicate:
    data_seed, test_seed, query_seed = np.random.SeedSequence([seed, index]).spawn(3)
    dataset = sample_dataset(spec, n, data_seed)
    estimate = lpo_exact(dataset, k, p, n_jobs=1).value
    if true_risk_method is None:
        return _Replicate(estimate, float("nan"), 0, 0)

    true_risk = conditional_error(dataset, k, spec, method=true_risk_method, test_size=test_size, seed=test_seed)
    query, _ = sample_points(spec, 1, query_seed)
    disagreement = int(classifier_disagreement(dataset, p, k, query) > 0)
    return _Replicate(estimate, true_risk, disagreement, stone_counter(dataset, k))


def _simulate(
    spec: DistributionSpec,
    n: int,
    p: int,
    k: int,
    replicates: int,
    seed: int,
    true_risk_method: Optional[str],
    test_size: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> List[_Replicate]:
    settings = get_settings()
    n_jobs = n_jobs or settings.workers
    test_size = test_size or settings.test_set_size
    indices = range(replicates)
    if n_jobs == 1:
        progress = tqdm(indices, desc=f"n={n} p={p} k={k}", disable=not settings.show_progress, leave=False)
        return [_simulate_replicate(spec, n, p, k, seed, i, true_risk_method, test_size) for i in progress]
    return Parallel(n_jobs=n_jobs)(
        delayed(_simulate_replicate)(spec, n, p, k, seed, i, true_risk_method, test_size) for i in indices
    )


def _standard_error(values: np.ndarray) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))


def _frequency_se(frequency: float, count: int) -> float:
    return math.sqrt(max(frequency * (1.0 - frequency), 0.0) / count)


def _check(bound_id: str, empirical: float, standard_error: float, bound: float) -> BoundCheck:
    slack = bound / empirical if empirical > 0 else None
    return BoundCheck(
        bound_id=bound_id,
        empirical=empirical,
        standard_error=standard_error,
        bound=bound,
        slack_ratio=slack,
        violated=empirical > bound + TOLERANCE_SE * standard_error,
    )


def _tail_envelopes(n: int, p: int, k: int, gamma_d: float, t: float) -> Dict[str, float]:
    """Two-sided envelopes for P(|R_p - E R_p| > t); one-sided bounds count twice"""
    envelopes = {
        "mcdiarmid_tail": mcdiarmid_tail(n, p, k, gamma_d, t),
        "concentration_tail_poly": 2.0 * concentration_tail_poly(n, p, k, gamma_d, t),
    }
    if is_large_p(n, p):
        envelopes["concentration_tail_large_p"] = concentration_tail_large_p(n, p, k, gamma_d, t)
    else:
        envelopes["concentration_tail_small_p"] = 2.0 * concentration_tail_small_p(n, p, k, gamma_d, t)
    return envelopes


def _tail_rows(
    estimates: np.ndarray,
    n: int,
    p: int,
    k: int,
    gamma_d: float,
    t_grid: Sequence[float],
    bound_scale: float,
) -> List[TailRow]:
    count = estimates.shape[0]
    deviations = np.abs(estimates - estimates.mean())
    mean_se = _standard_error(estimates)
    rows = []
    for t in sorted(t_grid):
        frequency = float(np.mean(deviations > t))
        se = _frequency_se(frequency, count)
        # the centre is the replicate mean: its uncertainty widens t's tolerance
        t_loose = t - TOLERANCE_SE * mean_se
        loose = _tail_envelopes(n, p, k, gamma_d, t_loose) if t_loose > 0 else None
        for bound_id, value in _tail_envelopes(n, p, k, gamma_d, t).items():
            violated = loose is not None and frequency > bound_scale * loose[bound_id] + TOLERANCE_SE * se
            rows.append(
                TailRow(
                    t=t,
                    empirical=frequency,
                    standard_error=se,
                    bound_id=bound_id,
                    bound_value=bound_scale * value,
                    violated=violated,
                )
            )
    return rows


def empirical_campaign(
    spec: DistributionSpec,
    n: int,
    p: int,
    k: int,
    replicates: int,
    t_grid: Sequence[float],
    q_max: int,
    seed: int,
    gamma_d: Optional[float] = None,
    true_risk: TrueRiskMethod = "auto",
    test_size: Optional[int] = None,
    n_jobs: Optional[int] = None,
    bound_scale: float = 1.0,
) -> ReplicationReport:
    """
    Simulate `replicates` datasets and compare the estimator's behaviour with each bound

    Args:
        spec: Data distribution
        n, p, k: Sample size, leave-out size and neighbor count
        replicates: Number of simulated datasets, at least 100
        t_grid: Deviation levels of the tail table
        q_max: Highest moment order checked, at least 2
        seed: Master seed; replicate r uses SeedSequence([seed, r])
        gamma_d: Stone constant, the dimension's default when omitted
        true_risk: "closed_form_1d", "test_set" or "auto"
        test_size: Test-set size for the plug-in true risk
        n_jobs: joblib workers; the report does not depend on it
        bound_scale: Multiplies every bound; values below 1 corrupt them on purpose

    Returns:
        ReplicationReport whose checks flag any bound exceeded by more than 3 standard errors
    """
    check_feasible(n, p, k)
    if replicates < 100:
        raise InputError(f"a campaign needs at least 100 replicates, got {replicates}")
    if q_max < 2:
        raise InputError(f"q_max must be at least 2, got {q_max}")
    gamma_d = stone_gamma(spec.dimension, gamma_d)
    method = _resolve_true_risk(spec, true_risk)

    logger.info("Campaign n=%d p=%d k=%d: %d replicates, true risk by %s", n, p, k, replicates, method)
    runs = _simulate(spec, n, p, k, replicates, seed, method, test_size, n_jobs)
    estimates = np.array([run.estimate for run in runs])
    true_risks = np.array([run.true_risk for run in runs])
    disagreements = np.array([run.disagreement for run in runs], dtype=float)

    deviations = estimates - estimates.mean()
    central = {q: float(np.mean(deviations**q)) for q in range(1, q_max + 1)}
    absolute = {q: float(np.mean(np.abs(deviations) ** q)) for q in range(1, q_max + 1)}

    gaps = estimates - true_risks
    bias = float(gaps.mean())
    squared = gaps**2
    stability = float(disagreements.mean())
    stone_max = max(run.stone for run in runs)

    checks = [
        _check("bias_bound", abs(bias), _standard_error(gaps), bound_scale * bias_bound(n, p, k)),
        _check("mse_bound", float(squared.mean()), _standard_error(squared), bound_scale * mse_bound(n, p, k)),
        _check(
            "stability_bound",
            stability,
            _frequency_se(stability, replicates),
            bound_scale * stability_bound(n, p, k),
        ),
        _check("stone_ceiling", float(stone_max), 0.0, bound_scale * k * gamma_d),
    ]

    # delta method for the variance of the sample variance
    variance_se = math.sqrt(max(absolute.get(4, float(np.mean(deviations**4))) - central[2] ** 2, 0.0) / replicates)
    checks.append(_check("moment_bound_lpo_q2", central[2], variance_se, bound_scale * moment_bound_lpo(2, n, p, k, gamma_d)))
    for q in range(3, q_max + 1):
        se = _standard_error(np.abs(deviations) ** q)
        checks.append(_check(f"moment_bound_lpo_q{q}", absolute[q], se, bound_scale * moment_bound_lpo(q, n, p, k, gamma_d)))
    if is_large_p(n, p):
        checks.append(
            _check(
                "moment_bound_lpo_large_p_q2",
                central[2],
                variance_se,
                bound_scale * moment_bound_lpo_large_p(2, n, p, k, gamma_d),
            )
        )
        for q in range(3, q_max + 1):
            se = _standard_error(np.abs(deviations) ** q)
            checks.append(
                _check(
                    f"moment_bound_lpo_large_p_q{q}",
                    absolute[q],
                    se,
                    bound_scale * moment_bound_lpo_large_p(q, n, p, k, gamma_d),
                )
            )

    report = ReplicationReport(
        spec=spec,
        n=n,
        p=p,
        k=k,
        gamma_d=gamma_d,
        replicates=replicates,
        seed=seed,
        q_max=q_max,
        true_risk_method=method,
        mean_estimate=float(estimates.mean()),
        mean_true_risk=float(true_risks.mean()),
        central_moments=central,
        absolute_central_moments=absolute,
        tails=_tail_rows(estimates, n, p, k, gamma_d, t_grid, bound_scale),
        bias=bias,
        bias_standard_error=_standard_error(gaps),
        mse=float(squared.mean()),
        mse_standard_error=_standard_error(squared),
        stability_frequency=stability,
        stability_standard_error=_frequency_se(stability, replicates),
        stone_max_in_degree=stone_max,
        checks=checks,
    )
    if report.violations:
        logger.warning("Campaign n=%d p=%d k=%d: %d bound violations", n, p, k, report.violations)
    return report


def run_campaign_matrix(
    spec: DistributionSpec,
    n: int,
    p_values: Sequence[int],
    k_values: Sequence[int],
    replicates: int,
    t_grid: Sequence[float],
    q_max: int,
    seed: int,
    gamma_d: Optional[float] = None,
    n_jobs: Optional[int] = None,
    bound_scale: float = 1.0,
) -> CampaignMatrix:
    """One campaign per (k, p) cell, each seeded from the master seed and its cell index"""
    reports = []
    for cell, (k, p) in enumerate((k, p) for k in k_values for p in p_values):
        cell_seed = int(np.random.SeedSequence([seed, cell]).generate_state(1)[0])
        reports.append(
            empirical_campaign(
                spec, n, p, k, replicates, t_grid, q_max, cell_seed,
                gamma_d=gamma_d, n_jobs=n_jobs, bound_scale=bound_scale,
            )
        )
    return CampaignMatrix(seed=seed, reports=reports)


def tail_experiment(
    spec: DistributionSpec,
    n: int,
    p: int,
    k: int,
    replicates: int,
    t_grid: Sequence[float],
    seed: int,
    gamma_d: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> TailTable:
    check_feasible(n, p, k)
    if replicates < 1000:
        raise InputError(f"tail frequencies need at least 1000 replicates, got {replicates}")
    gamma_d = stone_gamma(spec.dimension, gamma_d)
    runs = _simulate(spec, n, p, k, replicates, seed, None, n_jobs=n_jobs)
    estimates = np.array([run.estimate for run in runs])
    return TailTable(
        n=n,
        p=p,
        k=k,
        replicates=replicates,
        seed=seed,
        mean_estimate=float(estimates.mean()),
        mean_standard_error=_standard_error(estimates),
        rows=_tail_rows(estimates, n, p, k, gamma_d, t_grid, 1.0),
    )


def stability_experiment(
    spec: DistributionSpec,
    n: int,
    p: int,
    k: int,
    replicates: int,
    seed: int,
) -> StabilityResult:
    """Disagreement at an independent query between the fits on n and on n-p points"""
    check_feasible(n, p, k)
    if replicates < 1:
        raise InputError("need at least one replicate")
    disagreements = 0
    settings = get_settings()
    for index in tqdm(range(replicates), desc="stability", disable=not settings.show_progress, leave=False):
        features, labels = sample_points(spec, n + 1, np.random.SeedSequence([seed, index]))
        dataset = Dataset(features[:n], labels[:n])
        disagreements += int(classifier_disagreement(dataset, p, k, features[n:]) > 0)

    frequency = disagreements / replicates
    se = _frequency_se(frequency, replicates)
    bound = stability_bound(n, p, k)
    return StabilityResult(
        n=n,
        p=p,
        k=k,
        replicates=replicates,
        seed=seed,
        frequency=frequency,
        standard_error=se,
        bound=bound,
        violated=frequency > bound + TOLERANCE_SE * se,
    )
