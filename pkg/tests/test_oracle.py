import pytest

from backend.errors import EnumerationCapError
from backend.lpo_exact import lpo_exact
from evaluation.oracle import off_by_one_estimator, oracle_dataset, oracle_sweep


def test_small_sweep_passes():
    report = oracle_sweep(n_values=range(4, 8), datasets=4, permutation_n=(5,))
    assert report.passed
    assert report.cases_checked > 0
    assert report.permutation_checks > 0
    assert report.max_abs_discrepancy <= 1e-12


def test_injected_fault_is_caught():
    report = oracle_sweep(n_values=range(4, 7), datasets=4, permutation_n=(), estimator=off_by_one_estimator)
    assert not report.passed


def nudged_estimator(dataset, k, p):
    honest = lpo_exact(dataset, k, p)
    shift = -5e-11 if honest.value > 0.5 else 5e-11
    return honest.model_copy(update={"value": honest.value + shift})


def test_permutation_checks_use_the_requested_tolerance():
    report = oracle_sweep(n_values=(), permutation_n=(5,), estimator=nudged_estimator)
    assert report.permutation_checks > 0
    assert len(report.failures) == report.permutation_checks
    assert {case.check for case in report.failures} == {"permutation"}
    loose = oracle_sweep(n_values=(), permutation_n=(5,), estimator=nudged_estimator, tolerance=1e-9)
    assert loose.passed


def test_cap_is_enforced():
    with pytest.raises(EnumerationCapError):
        oracle_sweep(n_values=[10], k_values=[1], datasets=1, permutation_n=(), cap=50)


def test_tie_datasets_are_reproducible():
    assert oracle_dataset(8, 2, seed=3, ties=True) == oracle_dataset(8, 2, seed=3, ties=True)


@pytest.mark.slow
def test_full_sweep():
    report = oracle_sweep()
    assert report.passed
    assert report.max_abs_discrepancy <= 1e-12
