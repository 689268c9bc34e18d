import numpy as np
import pytest

from backend.errors import InputError
from backend.knn import Dataset
from evaluation.distributions import DistributionSpec
from evaluation.evaluate import (
    classifier_disagreement,
    empirical_campaign,
    run_campaign_matrix,
    stability_experiment,
    stone_counter,
    tail_experiment,
)

T_GRID = [0.05, 0.1, 0.2]


def test_stone_counter_small_cases():
    assert stone_counter(Dataset(np.array([0.0, 1.0]), np.array([0, 1])), 1) == 1
    grid = Dataset(np.arange(10, dtype=float), np.zeros(10, dtype=int))
    assert stone_counter(grid, 1) == 2


@pytest.mark.parametrize("seed", range(10))
def test_stone_counter_respects_the_line_constant(seed):
    rng = np.random.default_rng(seed)
    dataset = Dataset(rng.uniform(size=50), rng.integers(0, 2, size=50))
    assert stone_counter(dataset, 3) <= 6


def test_duplicated_points_leave_the_fit_unchanged():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((20, 2))
    labels = rng.integers(0, 2, size=20)
    # the last 5 points repeat the first 5
    dataset = Dataset(np.vstack([base, base[:5]]), np.concatenate([labels, labels[:5]]))
    queries = rng.standard_normal((200, 2))
    assert classifier_disagreement(dataset, 5, 1, queries) == 0.0


def test_small_campaign_holds_and_is_reproducible():
    spec = DistributionSpec()
    first = empirical_campaign(spec, 30, 5, 3, 100, T_GRID, 4, seed=0)
    second = empirical_campaign(spec, 30, 5, 3, 100, T_GRID, 4, seed=0)
    assert first.violations == 0
    assert first.model_dump_json() == second.model_dump_json()
    assert first.true_risk_method == "closed_form_1d"
    assert first.central_moments[1] == pytest.approx(0.0, abs=1e-12)
    assert {check.bound_id for check in first.checks} >= {
        "bias_bound", "mse_bound", "stability_bound", "stone_ceiling", "moment_bound_lpo_q2", "moment_bound_lpo_q4",
    }
    assert len(first.tails) == 3 * len(T_GRID)


def test_worker_count_does_not_change_the_report():
    spec = DistributionSpec()
    serial = empirical_campaign(spec, 20, 3, 1, 100, T_GRID, 3, seed=4, n_jobs=1)
    parallel = empirical_campaign(spec, 20, 3, 1, 100, T_GRID, 3, seed=4, n_jobs=2)
    assert serial.model_dump_json() == parallel.model_dump_json()


def test_corrupted_bounds_are_flagged():
    report = empirical_campaign(DistributionSpec(), 30, 5, 3, 100, T_GRID, 3, seed=1, bound_scale=1e-6)
    assert report.violations > 0


def test_large_p_campaign_checks_large_p_moments():
    report = empirical_campaign(DistributionSpec(), 20, 15, 1, 100, T_GRID, 3, seed=2)
    ids = {check.bound_id for check in report.checks}
    assert "moment_bound_lpo_large_p_q2" in ids
    assert {row.bound_id for row in report.tails} >= {"concentration_tail_large_p"}
    assert report.violations == 0


def test_campaign_input_checks():
    with pytest.raises(InputError):
        empirical_campaign(DistributionSpec(), 30, 5, 3, 50, T_GRID, 4, seed=0)
    with pytest.raises(InputError):
        tail_experiment(DistributionSpec(), 30, 5, 3, 500, T_GRID, seed=0)


def test_tail_experiment_frequencies_stay_under_envelopes():
    table = tail_experiment(DistributionSpec(), 20, 4, 3, 1000, T_GRID, seed=3)
    assert table.violations == 0
    frequencies = [row.empirical for row in table.rows if row.bound_id == "mcdiarmid_tail"]
    assert frequencies == sorted(frequencies, reverse=True)


def test_stability_frequency_under_bound():
    result = stability_experiment(DistributionSpec(), 200, 1, 1, 1000, seed=0)
    assert result.bound == pytest.approx(0.0079789, abs=1e-7)
    assert not result.violated


@pytest.mark.slow
def test_default_campaign_holds():
    matrix = run_campaign_matrix(DistributionSpec(), 100, [1, 10, 30], [1, 5], 1000, [0.05, 0.1, 0.2, 0.3], 4, seed=0)
    assert len(matrix.reports) == 6
    assert matrix.violations == 0


@pytest.mark.slow
def test_large_p_tails():
    table = tail_experiment(DistributionSpec(), 60, 52, 2, 1000, [0.02, 0.05, 0.1, 0.2], seed=8)
    assert "concentration_tail_large_p" in {row.bound_id for row in table.rows}
    assert table.violations == 0


@pytest.mark.slow
def test_disagreement_grows_with_p():
    low = stability_experiment(DistributionSpec(), 100, 1, 1, 2000, seed=0)
    high = stability_experiment(DistributionSpec(), 100, 50, 1, 2000, seed=0)
    assert low.frequency <= high.frequency
    assert not low.violated and not high.violated


@pytest.mark.slow
@pytest.mark.parametrize("n, p, k", [(200, 1, 1), (200, 20, 5)])
def test_stability_over_ten_thousand_replicates(n, p, k):
    result = stability_experiment(DistributionSpec(), n, p, k, 10_000, seed=n + p + k)
    assert result.replicates == 10_000
    assert not result.violated


@pytest.mark.slow
def test_stone_ceiling_on_a_thousand_lines():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        dataset = Dataset(rng.uniform(-3, 3, size=50), rng.integers(0, 2, size=50))
        for k in (1, 3, 7):
            assert stone_counter(dataset, k) <= 2 * k
