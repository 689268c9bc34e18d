import numpy as np
import pytest

from backend.config import reset_settings
from backend.knn import Dataset


@pytest.fixture(autouse=True)
def quiet_settings(monkeypatch):
    monkeypatch.setenv("LPO_SHOW_PROGRESS", "false")
    monkeypatch.setenv("LPO_WORKERS", "1")
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def line4():
    """Points 0, 1, 2, 3 with labels 0, 0, 1, 1"""
    return Dataset(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0, 0, 1, 1]))


@pytest.fixture
def line3():
    """Points 0, 1, 2 with labels 0, 0, 1"""
    return Dataset(np.array([0.0, 1.0, 2.0]), np.array([0, 0, 1]))


def random_dataset(n, d, seed, ties=False):
    rng = np.random.default_rng(seed)
    if ties:
        features = rng.integers(0, 3, size=(n, d)).astype(float)
    else:
        features = rng.standard_normal((n, d))
    return Dataset(features, rng.integers(0, 2, size=n))
