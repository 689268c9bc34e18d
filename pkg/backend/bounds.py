"""
Closed-form bounds for the leave-p-out risk of the kNN classifier

Every function evaluates one stated inequality. Two different C1 constants exist, one
for the leave-one-out moments (c1_loo) and one for the leave-p-out variance (c1_lpo);
they are kept apart. The concentration constant Delta is built from c1_loo and c2.
kappa is fixed at 1.271 so reports stay comparable.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, model_validator

from backend import __version__
from backend.errors import DomainError, InfeasibleError, MissingConstantError, RegimeError

KAPPA = 1.271
SQRT_2PI = math.sqrt(2.0 * math.pi)

# gamma_1 = 2: on a line a point is among the k nearest neighbors of at most 2k others
DEFAULT_STONE_GAMMA: Dict[int, float] = {1: 2.0}


@dataclass(frozen=True)
class BoundConstants:
    gamma_d: float
    c1_loo: float
    c2: float
    c1_lpo: float
    delta: float
    gamma: float
    square: float

    @classmethod
    def from_gamma(cls, gamma_d: float) -> "BoundConstants":
        if gamma_d <= 0:
            raise DomainError(f"gamma_d must be positive, got {gamma_d}")
        c1_loo = 2.0 + 16.0 * gamma_d
        c2 = 4.0 * gamma_d * math.sqrt(2.0 * KAPPA)
        c1_lpo = 128.0 * KAPPA * gamma_d / SQRT_2PI
        return cls(
            gamma_d=gamma_d,
            c1_loo=c1_loo,
            c2=c2,
            c1_lpo=c1_lpo,
            delta=4.0 * math.sqrt(math.e) * max(c2, math.sqrt(c1_loo)),
            gamma=2.0 * math.sqrt(2.0 * math.e) * max(math.sqrt(2.0 * c1_lpo), 2.0 * c2),
            square=1024.0 * math.e * KAPPA * (1.0 + gamma_d),
        )


@dataclass(frozen=True)
class ResamplingProbabilities:
    p_test: float
    neighbor_sum: float
    far_rank_sum: float


@dataclass(frozen=True)
class DeviationTerms:
    sub_gaussian_term: float
    heavy_term: float
    prefactor: float

    @property
    def deviation(self) -> float:
        return self.sub_gaussian_term + self.heavy_term


@dataclass(frozen=True)
class RosenthalConstant:
    q: float
    base: float  # (2 sqrt(2e))^q
    heavy_weight: float  # q^q, multiplies the sum of q-th moments
    light_weight: float  # sqrt(q)^q, multiplies the variance term

    @property
    def scalar(self) -> float:
        return (2.0 * math.sqrt(2.0 * math.e) * math.sqrt(self.q)) ** self.q


class BoundInputs(BaseModel):
    n: int = Field(ge=2)
    p: int = Field(ge=1)
    k: int = Field(ge=1)
    q: float = Field(default=2.0, ge=2.0)
    t: float = Field(default=0.1, gt=0.0)
    x: float = Field(default=1.0, gt=0.0)
    gamma_d: float = Field(default=2.0, ge=1.0)
    kappa: float = KAPPA

    @model_validator(mode="after")
    def _check(self) -> "BoundInputs":
        if self.p + self.k > self.n:
            raise ValueError(f"p + k must not exceed n (p={self.p}, k={self.k}, n={self.n})")
        if self.kappa != KAPPA:
            raise ValueError(f"kappa is fixed at {KAPPA}")
        return self


class BoundEntry(BaseModel):
    bound_id: str
    kind: Literal["probability", "moment", "deviation", "constant", "risk_gap"]
    value: Optional[float] = None
    clipped: Optional[float] = None
    in_regime: bool = True
    note: Optional[str] = None


class BoundReport(BaseModel):
    version: str = __version__
    inputs: BoundInputs
    constants: Dict[str, float]
    entries: List[BoundEntry]

    def get(self, bound_id: str) -> BoundEntry:
        for entry in self.entries:
            if entry.bound_id == bound_id:
                return entry
        raise KeyError(bound_id)


def is_large_p(n: int, p: int) -> bool:
    """p > n/2 + 1"""
    return 2 * p > n + 2


def _blocks(n: int, p: int) -> Tuple[int, int]:
    m = n - p + 1
    return m, n // m


def _require_feasible(n: int, p: int, k: int) -> None:
    if p < 1 or k < 1 or p + k > n:
        raise InfeasibleError(f"need p, k >= 1 and p + k <= n, got n={n}, p={p}, k={k}")


def _require_large_p(n: int, p: int) -> None:
    if not is_large_p(n, p):
        raise RegimeError(f"bound holds only for p > n/2 + 1, got n={n}, p={p}")


def _require_positive(name: str, value: float) -> None:
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value}")


def stone_gamma(d: int, override: Optional[float] = None) -> float:
    if d < 1:
        raise DomainError(f"dimension must be at least 1, got {d}")
    if override is not None:
        return float(override)
    if d not in DEFAULT_STONE_GAMMA:
        raise MissingConstantError(f"no built-in Stone constant for d={d}; supply gamma_d")
    return DEFAULT_STONE_GAMMA[d]


def resampling_probs(n: int, p: int, k: int) -> ResamplingProbabilities:
    _require_feasible(n, p, k)
    neighbor_sum = k * p / n
    return ResamplingProbabilities(
        p_test=p / n,
        neighbor_sum=neighbor_sum,
        far_rank_sum=neighbor_sum * (p - 1) / (n - 1),
    )


def bias_bound(n: int, p: int, k: int) -> float:
    _require_feasible(n, p, k)
    return 4.0 / SQRT_2PI * p * math.sqrt(k) / n


def mse_bound(n: int, p: int, k: int) -> float:
    _require_feasible(n, p, k)
    return 2.0 * math.sqrt(2.0) / math.sqrt(math.pi) * (2 * p + 3) * math.sqrt(k) / n + 1.0 / n


def stability_bound(n: int, p: int, k: int) -> float:
    """Disagreement probability between the fits on n and on n-p points"""
    return bias_bound(n, p, k)


def mcdiarmid_tail(n: int, p: int, k: int, gamma_d: float, t: float) -> float:
    _require_positive("t", t)
    return 2.0 * math.exp(-n * t * t / (8.0 * (k + p - 1) ** 2 * gamma_d**2))


def concentration_tail_poly(n: int, p: int, k: int, gamma_d: float, t: float) -> float:
    _require_positive("t", t)
    square = BoundConstants.from_gamma(gamma_d).square
    bracket = 1.0 + (k + p) * (p - 1) / (n - 1)
    return math.exp(-n * t * t / (square * k * k * bracket))


def concentration_tail_small_p(n: int, p: int, k: int, gamma_d: float, t: float) -> float:
    _require_positive("t", t)
    _require_feasible(n, p, k)
    delta = BoundConstants.from_gamma(gamma_d).delta
    return math.exp(-(n - p + 1) * t * t / (delta**2 * k * k))


def concentration_tail_large_p(n: int, p: int, k: int, gamma_d: float, t: float) -> float:
    _require_positive("t", t)
    _require_feasible(n, p, k)
    _require_large_p(n, p)
    big_gamma = BoundConstants.from_gamma(gamma_d).gamma
    m, blocks = _blocks(n, p)
    sub_gaussian = m * blocks * t * t / (4.0 * big_gamma**2 * k * math.sqrt(k))
    heavy = (m * blocks**2 * t * t / (4.0 * big_gamma**2 * k * k)) ** (1.0 / 3.0)
    return math.e * blocks * math.exp(-min(sub_gaussian, heavy) / (2.0 * math.e))


def large_p_moment_coefficients(
    n: int, p: int, k: int, gamma_d: float
) -> Tuple[float, float, List[float], List[float]]:
    """
    (C, q0, lambdas, alphas) such that the large-p moment bound reads
    E|X|^q <= C (sum_i lambda_i q^alpha_i)^q for q >= q0.
    """
    _require_feasible(n, p, k)
    _require_large_p(n, p)
    big_gamma = BoundConstants.from_gamma(gamma_d).gamma
    m, blocks = _blocks(n, p)
    lambdas = [
        big_gamma * math.sqrt(k * math.sqrt(k) / (m * blocks)),
        big_gamma * math.sqrt(k * k / (m * blocks**2)),
    ]
    return float(blocks), 2.0, lambdas, [0.5, 1.5]


def deviation_terms_large_p(n: int, p: int, k: int, gamma_d: float, x: float) -> DeviationTerms:
    """
    Deviation exceeded with probability at most prefactor * exp(-x).

    The heavy term is (2e)^{3/2} Gamma sqrt(k^2 / (m F^2)) x^{3/2}, F = floor(n/m).
    """
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    _require_feasible(n, p, k)
    _require_large_p(n, p)
    big_gamma = BoundConstants.from_gamma(gamma_d).gamma
    m, blocks = _blocks(n, p)
    root_2e = math.sqrt(2.0 * math.e)
    return DeviationTerms(
        sub_gaussian_term=root_2e * big_gamma * math.sqrt(k * math.sqrt(k) / (m * blocks)) * math.sqrt(x),
        heavy_term=root_2e * big_gamma * 2.0 * math.e * math.sqrt(k * k / (m * blocks**2)) * x**1.5,
        prefactor=math.e * blocks,
    )


def moment_bound_loo(q: float, k: int, m: int, gamma_d: float) -> float:
    if q < 2:
        raise DomainError(f"moment order must be at least 2, got {q}")
    if k > m - 1:
        raise InfeasibleError(f"need k <= m-1, got k={k}, m={m}")
    constants = BoundConstants.from_gamma(gamma_d)
    if q == 2:
        return constants.c1_loo * k**1.5 / m
    return (constants.c2 * math.sqrt(q)) ** q * (k / math.sqrt(m)) ** q


def moment_bound_lpo(q: float, n: int, p: int, k: int, gamma_d: float) -> float:
    if q < 2:
        raise DomainError(f"moment order must be at least 2, got {q}")
    _require_feasible(n, p, k)
    constants = BoundConstants.from_gamma(gamma_d)
    m = n - p + 1
    if q == 2:
        return constants.c1_lpo * k**1.5 / m
    return (constants.c2 * math.sqrt(k * k / m) * math.sqrt(q)) ** q


def moment_bound_lpo_large_p(q: float, n: int, p: int, k: int, gamma_d: float) -> float:
    if q < 2:
        raise DomainError(f"moment order must be at least 2, got {q}")
    _require_feasible(n, p, k)
    _require_large_p(n, p)
    constants = BoundConstants.from_gamma(gamma_d)
    m, blocks = _blocks(n, p)
    if q == 2:
        return constants.c1_lpo * k**1.5 / (m * blocks)
    light = math.sqrt(k * math.sqrt(k) / (m * blocks)) * math.sqrt(q)
    heavy = math.sqrt(k * k / (m * blocks**2)) * q**1.5
    return blocks * constants.gamma**q * max(light, heavy) ** q


def rosenthal_constant(q: float) -> RosenthalConstant:
    """Constant of Rosenthal's inequality for symmetric summands, q > 2"""
    if q <= 2:
        raise DomainError(f"Rosenthal constant needs q > 2, got {q}")
    return RosenthalConstant(
        q=q,
        base=(2.0 * math.sqrt(2.0 * math.e)) ** q,
        heavy_weight=q**q,
        light_weight=math.sqrt(q) ** q,
    )


def moment_transfer_lpo_from_loo(
    q: float,
    n: int,
    p: int,
    loo_moment_q: float,
    loo_variance: Optional[float] = None,
    variant: Literal["auto", "direct", "scaled"] = "auto",
) -> float:
    """
    Upper bound on the q-th central moment of the LpO estimator from the moments of the
    leave-one-out estimator on m = n-p+1 points.

    "direct" passes the L1O moment through. "scaled" needs p > n/2 + 1: the variance is
    divided by floor(n/m), higher moments go through Rosenthal's inequality over the
    floor(n/m) independent blocks. "auto" picks "scaled" whenever it applies.
    """
    if q < 2:
        raise DomainError(f"moment order must be at least 2, got {q}")
    if variant == "auto":
        variant = "scaled" if is_large_p(n, p) else "direct"
    if variant == "direct":
        return loo_moment_q

    _require_large_p(n, p)
    _, blocks = _blocks(n, p)
    if q == 2:
        return (loo_variance if loo_variance is not None else loo_moment_q) / blocks
    if loo_variance is None:
        raise DomainError("the q > 2 transfer needs the leave-one-out variance")
    rosenthal = rosenthal_constant(q)
    heavy = rosenthal.heavy_weight * 2.0**q * blocks * loo_moment_q / blocks**q
    light = rosenthal.light_weight * math.sqrt(2.0 * loo_variance / blocks) ** q
    return rosenthal.base * max(heavy, light)


def _check_moment_sequence(lambdas: Sequence[float], alphas: Sequence[float]) -> None:
    if len(lambdas) != len(alphas) or not lambdas:
        raise DomainError("lambdas and alphas must be nonempty and of equal length")
    if min(lambdas) <= 0 or min(alphas) <= 0:
        raise DomainError("lambdas and alphas must be positive")


def tail_from_moments(
    C: float, q0: float, lambdas: Sequence[float], alphas: Sequence[float], t: float
) -> float:
    """
    Tail bound P(|X| > t) from E|X|^q <= C (sum_i lambda_i q^alpha_i)^q for q >= q0
    """
    _check_moment_sequence(lambdas, alphas)
    _require_positive("t", t)
    count = len(lambdas)
    min_alpha = min(alphas)
    exponent = min((t / (count * lam)) ** (1.0 / alpha) for lam, alpha in zip(lambdas, alphas))
    return C * math.exp(q0 * min_alpha) * math.exp(-min_alpha * exponent / math.e)


def deviation_from_moments(
    C: float, q0: float, lambdas: Sequence[float], alphas: Sequence[float], x: float
) -> Tuple[float, float]:
    """(deviation, probability): |X| exceeds the deviation with at most that probability"""
    _check_moment_sequence(lambdas, alphas)
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    min_alpha = min(alphas)
    deviation = sum(lam * (math.e * x / min_alpha) ** alpha for lam, alpha in zip(lambdas, alphas))
    return deviation, C * math.exp(q0 * min_alpha) * math.exp(-x)


def l1o_concentration_devroye(n: int, k: int, gamma_d: float, eps: float) -> float:
    # exponent taken linear in eps, as stated
    _require_positive("eps", eps)
    return 2.0 * math.exp(-n * eps / (gamma_d**2 * k * k))


def confidence_gap_bound(n: int, p: int, k: int, gamma_d: float, x: float) -> float:
    """
    Radius such that |R_p - L| stays below it with probability at least 1 - 2 e^{-x}
    """
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    _require_feasible(n, p, k)
    if is_large_p(n, p):
        raise RegimeError(f"confidence radius holds only for p <= n/2 + 1, got n={n}, p={p}")
    delta = BoundConstants.from_gamma(gamma_d).delta
    deviation = math.sqrt(delta**2 * k * k * x / (n * (1.0 - (p - 1) / n)))
    return deviation + bias_bound(n, p, k)


def clip_probability(value: float) -> float:
    return min(max(value, 0.0), 1.0)


def evaluate_all(inputs: BoundInputs) -> BoundReport:
    """Every bound at one input tuple; bounds outside their regime are marked, not raised"""
    n, p, k, q, t, x, g = inputs.n, inputs.p, inputs.k, inputs.q, inputs.t, inputs.x, inputs.gamma_d
    constants = BoundConstants.from_gamma(g)
    large = is_large_p(n, p)
    entries: List[BoundEntry] = []

    def add(bound_id: str, kind: str, value: Optional[float], in_regime: bool = True, note: Optional[str] = None):
        clipped = clip_probability(value) if (kind == "probability" and value is not None) else None
        entries.append(
            BoundEntry(bound_id=bound_id, kind=kind, value=value, clipped=clipped, in_regime=in_regime, note=note)
        )

    def out_of_regime(bound_id: str, kind: str, regime: str):
        add(bound_id, kind, None, in_regime=False, note=f"requires {regime}")

    probs = resampling_probs(n, p, k)
    add("resampling_p_test", "probability", probs.p_test)
    add("resampling_neighbor_sum", "constant", probs.neighbor_sum)
    add("resampling_far_rank_sum", "constant", probs.far_rank_sum)

    add("bias_bound", "risk_gap", bias_bound(n, p, k))
    add("mse_bound", "risk_gap", mse_bound(n, p, k))
    add("stability_bound", "probability", stability_bound(n, p, k))

    add("mcdiarmid_tail", "probability", mcdiarmid_tail(n, p, k, g, t))
    add("concentration_tail_poly", "probability", concentration_tail_poly(n, p, k, g, t))
    add("l1o_concentration_devroye", "probability", l1o_concentration_devroye(n, k, g, t))

    if large:
        out_of_regime("concentration_tail_small_p", "probability", "p <= n/2 + 1")
        add("concentration_tail_large_p", "probability", concentration_tail_large_p(n, p, k, g, t))
        terms = deviation_terms_large_p(n, p, k, g, x)
        add("deviation_large_p_sub_gaussian", "deviation", terms.sub_gaussian_term)
        add("deviation_large_p_heavy", "deviation", terms.heavy_term)
        add("deviation_large_p_prefactor", "constant", terms.prefactor)
        add("moment_bound_lpo_large_p_q2", "moment", moment_bound_lpo_large_p(2, n, p, k, g))
        add("moment_bound_lpo_large_p", "moment", moment_bound_lpo_large_p(q, n, p, k, g))
        out_of_regime("confidence_gap_bound", "risk_gap", "p <= n/2 + 1")
    else:
        add("concentration_tail_small_p", "probability", concentration_tail_small_p(n, p, k, g, t))
        for bound_id, kind in (
            ("concentration_tail_large_p", "probability"),
            ("deviation_large_p_sub_gaussian", "deviation"),
            ("deviation_large_p_heavy", "deviation"),
            ("deviation_large_p_prefactor", "constant"),
            ("moment_bound_lpo_large_p_q2", "moment"),
            ("moment_bound_lpo_large_p", "moment"),
        ):
            out_of_regime(bound_id, kind, "p > n/2 + 1")
        add("confidence_gap_bound", "risk_gap", confidence_gap_bound(n, p, k, g, x))

    add("moment_bound_loo", "moment", moment_bound_loo(q, k, n - p + 1, g))
    add("moment_bound_lpo_q2", "moment", moment_bound_lpo(2, n, p, k, g))
    add("moment_bound_lpo", "moment", moment_bound_lpo(q, n, p, k, g))
    if q > 2:
        add("rosenthal_constant", "constant", rosenthal_constant(q).scalar)
    else:
        out_of_regime("rosenthal_constant", "constant", "q > 2")

    return BoundReport(
        inputs=inputs,
        constants={
            "kappa": KAPPA,
            "c1_loo": constants.c1_loo,
            "c2": constants.c2,
            "c1_lpo": constants.c1_lpo,
            "Delta": constants.delta,
            "Gamma": constants.gamma,
            "square": constants.square,
        },
        entries=entries,
    )


def main():
    """Print the bound report for a typical configuration"""
    report = evaluate_all(BoundInputs(n=100, p=10, k=4, q=4, t=0.5, x=1.0, gamma_d=2.0))
    print("=" * 80)
    print("Bound report for n=100, p=10, k=4, q=4, t=0.5, x=1, gamma_d=2")
    print("=" * 80)
    for name, value in report.constants.items():
        print(f"  {name:<10} {value:.6g}")
    for entry in report.entries:
        shown = "out of regime" if entry.value is None else f"{entry.value:.6g}"
        print(f"  {entry.bound_id:<34} {shown}")


if __name__ == "__main__":
    main()
