"""
Synthetic binary classification problems and the true error of a fitted kNN rule

Three families:
- gaussian_mixture_1d: Y ~ Bernoulli(prior), X | Y=y ~ N(location_y, scale_y^2)
- gaussian_mixture_md: same in R^d, class means location_y * (1, 0, ..., 0), isotropic
- uniform_checker_1d: X ~ U(0, 1), Y = 1 on odd cells of a regular grid, flipped with
  probability label_noise (disjoint class supports when label_noise = 0)
"""

import logging
import math
from typing import Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import norm

from backend.errors import InputError
from backend.knn import Dataset, predict

logger = logging.getLogger(__name__)

Kind = Literal["gaussian_mixture_1d", "gaussian_mixture_md", "uniform_checker_1d"]


class DistributionSpec(BaseModel):
    kind: Kind = "gaussian_mixture_1d"
    class_prior: float = Field(default=0.5, gt=0.0, lt=1.0)
    location0: float = -1.0
    location1: float = 1.0
    scale0: float = Field(default=1.0, gt=0.0)
    scale1: float = Field(default=1.0, gt=0.0)
    dimension: int = Field(default=1, ge=1)
    cells: int = Field(default=2, ge=1)
    label_noise: float = Field(default=0.0, ge=0.0, le=0.5)

    @model_validator(mode="after")
    def _check(self) -> "DistributionSpec":
        if self.kind.endswith("_1d") and self.dimension != 1:
            raise ValueError(f"{self.kind} has dimension 1, got {self.dimension}")
        return self

    def eta(self, x: np.ndarray) -> np.ndarray:
        """P(Y = 1 | X = x) for the 1-d families"""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian_mixture_1d":
            one = self.class_prior * norm.pdf(x, self.location1, self.scale1)
            zero = (1 - self.class_prior) * norm.pdf(x, self.location0, self.scale0)
            return one / (one + zero)
        if self.kind == "uniform_checker_1d":
            odd = (np.floor(np.clip(x, 0.0, np.nextafter(1.0, 0.0)) * self.cells) % 2) == 1
            return np.where(odd, 1.0 - self.label_noise, self.label_noise)
        raise InputError(f"eta is only available in closed form for 1-d kinds, not {self.kind}")

    def class_mass(self, label: int, a: float, b: float) -> float:
        """P(Y = label, a < X < b) for the 1-d families"""
        if b <= a:
            return 0.0
        if self.kind == "gaussian_mixture_1d":
            prior = self.class_prior if label == 1 else 1.0 - self.class_prior
            loc, scale = (self.location1, self.scale1) if label == 1 else (self.location0, self.scale0)
            return prior * float(norm.cdf(b, loc, scale) - norm.cdf(a, loc, scale))
        if self.kind == "uniform_checker_1d":
            return _checker_mass(self.cells, self.label_noise, label, a, b)
        raise InputError(f"closed-form class mass needs a 1-d kind, not {self.kind}")


def _checker_mass(cells: int, noise: float, label: int, a: float, b: float) -> float:
    lo, hi = max(a, 0.0), min(b, 1.0)
    if hi <= lo:
        return 0.0
    total = 0.0
    for cell in range(int(math.floor(lo * cells)), min(int(math.ceil(hi * cells)), cells)):
        left, right = max(lo, cell / cells), min(hi, (cell + 1) / cells)
        if right <= left:
            continue
        p_one = 1.0 - noise if cell % 2 == 1 else noise
        total += (right - left) * (p_one if label == 1 else 1.0 - p_one)
    return total


def _draw(spec: DistributionSpec, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if spec.kind == "uniform_checker_1d":
        x = rng.uniform(0.0, 1.0, size=size)
        y = (rng.uniform(size=size) < spec.eta(x)).astype(int)
        return x.reshape(-1, 1), y

    y = (rng.uniform(size=size) < spec.class_prior).astype(int)
    noise = rng.standard_normal((size, spec.dimension))
    scale = np.where(y == 1, spec.scale1, spec.scale0)[:, None]
    shift = np.zeros((size, spec.dimension))
    shift[:, 0] = np.where(y == 1, spec.location1, spec.location0)
    return shift + scale * noise, y


def sample_points(spec: DistributionSpec, size: int, seed: Union[int, np.random.SeedSequence]) -> Tuple[np.ndarray, np.ndarray]:
    """i.i.d. draws (features, labels), deterministic under the seed"""
    return _draw(spec, size, np.random.default_rng(seed))


def sample_dataset(spec: DistributionSpec, n: int, seed: Union[int, np.random.SeedSequence]) -> Dataset:
    if n < 2:
        raise InputError(f"a dataset needs at least 2 points, got {n}")
    features, labels = sample_points(spec, n, seed)
    return Dataset(features, labels)


def decision_regions_1d(dataset: Dataset, k: int):
    """
    Intervals on which the fitted 1-d kNN rule is constant, with their predictions.

    On a line the k nearest neighbors of x form a window of k consecutive sorted
    points; window l gives way to window l+1 at the midpoint of sorted points l and
    l+k. Yields (left, right, prediction).
    """
    if dataset.dimension != 1:
        raise InputError("decision regions are computed for 1-d datasets only")
    if k > dataset.n:
        raise InputError(f"k={k} exceeds the {dataset.n} training points")
    # ties on x never matter for the integral, they have probability zero
    order = np.argsort(dataset.features[:, 0], kind="stable")
    xs = dataset.features[order, 0]
    ys = dataset.labels[order].astype(int)
    n = dataset.n

    window_ones = np.convolve(ys, np.ones(k, dtype=int), mode="valid")  # n-k+1 windows
    breaks = (xs[: n - k] + xs[k:]) / 2.0
    edges = np.concatenate(([-np.inf], breaks, [np.inf]))
    for l in range(n - k + 1):
        yield float(edges[l]), float(edges[l + 1]), int(2 * window_ones[l] > k)


def conditional_error(
    dataset: Dataset,
    k: int,
    spec: DistributionSpec,
    method: Literal["closed_form_1d", "test_set"] = "closed_form_1d",
    test_size: Optional[int] = None,
    seed: Union[int, np.random.SeedSequence, None] = None,
) -> float:
    """L(f_k) = P(f_k(X) != Y | sample) for the rule fitted on the whole dataset"""
    if method == "closed_form_1d":
        if dataset.dimension != 1 or spec.dimension != 1:
            raise InputError("closed_form_1d needs a 1-d dataset and distribution")
        error = 0.0
        for left, right, prediction in decision_regions_1d(dataset, k):
            error += spec.class_mass(1 - prediction, left, right)
        return min(max(error, 0.0), 1.0)

    if method == "test_set":
        if test_size is None or seed is None:
            raise InputError("test_set needs a size and a seed")
        features, labels = sample_points(spec, test_size, seed)
        predictions = predict(dataset, features, k)
        return float(np.mean(predictions != labels))

    raise InputError(f"unknown method {method}")
