import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.errors import InfeasibleError, InputError
from backend.lpo_exact import lpo_bruteforce
from backend.selection import argmin_k, coverage_to_x, select_k, select_k_curves
from evaluation.distributions import DistributionSpec, sample_dataset
from tests.conftest import random_dataset


def test_single_candidate():
    curve = select_k(random_dataset(20, 1, seed=0), 5, [3])
    assert curve.chosen_k == 3


def test_ties_go_to_the_smallest_k():
    assert argmin_k([1, 3, 5], [0.2, 0.1, 0.1]) == 3
    with pytest.raises(InputError):
        argmin_k([], [])


@settings(max_examples=100)
@given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12))
def test_argmin_attains_the_minimum(values):
    grid = list(range(1, 2 * len(values), 2))
    chosen = argmin_k(grid, values)
    assert values[grid.index(chosen)] == min(values)
    assert all(k >= chosen for k, v in zip(grid, values) if v == min(values))


def test_separable_selection():
    spec = DistributionSpec(kind="uniform_checker_1d", cells=2)
    dataset = sample_dataset(spec, 200, 1)
    curve = select_k(dataset, 20, range(1, 42, 2), gamma_d=2.0)
    values = curve.values()
    assert values[curve.grid.index(curve.chosen_k)] == min(values)
    assert all(radius is not None for radius in curve.confidence_radius)


def test_downsampled_argmin_agrees_with_enumeration():
    dataset = random_dataset(10, 1, seed=6)
    grid = [1, 3, 5]
    curve = select_k(dataset, 3, grid)
    brute = [lpo_bruteforce(dataset, k, 3).value for k in grid]
    # near-ties between k values may break either way in floating point
    assert brute[grid.index(curve.chosen_k)] == pytest.approx(min(brute), abs=1e-12)


def test_radius_withheld_outside_regime_or_without_constant():
    dataset = random_dataset(20, 1, seed=2)
    assert select_k(dataset, 15, [1, 3]).radius_note == "no Stone constant supplied"
    curve = select_k(dataset, 15, [1, 3], gamma_d=2.0)
    assert curve.confidence_radius == [None, None]
    assert curve.radius_note is not None


def test_curves_skip_infeasible_k():
    dataset = random_dataset(12, 1, seed=3)
    curves = select_k_curves(dataset, [2, 9], [1, 3, 5])
    assert curves[2].grid == [1, 3, 5]
    assert curves[9].grid == [1, 3]
    with pytest.raises(InfeasibleError):
        select_k_curves(dataset, [11], [3, 5])
    with pytest.raises(InfeasibleError):
        select_k(dataset, 9, [5])


def test_coverage_to_x():
    assert coverage_to_x(0.95) == pytest.approx(np.log(40))
    with pytest.raises(InputError):
        coverage_to_x(1.0)
