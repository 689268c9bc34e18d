"""
Exception hierarchy shared by the engine, the verification harness and the CLI
"""


class LpoError(ValueError):
    """Base class for every error raised by this package."""


class InputError(LpoError):
    """Malformed dataset, CSV file or non-finite coordinates."""


class InfeasibleError(LpoError):
    """The (n, p, k) combination leaves fewer than k training neighbors."""


class InsufficientNeighborsError(InfeasibleError):
    """A training subset holds fewer than k points."""


class RegimeError(LpoError):
    """A bound was evaluated outside the (n, p) regime it is stated for."""


class MissingConstantError(LpoError):
    """Stone's constant is unknown for the requested dimension."""


class EnumerationCapError(LpoError):
    """Split enumeration would exceed the configured cap."""


class DomainError(LpoError):
    """An argument lies outside the domain of a closed-form expression."""


def check_feasible(n: int, p: int, k: int) -> None:
    """Raise InfeasibleError unless 1 <= p, 1 <= k and p + k <= n."""
    if k < 1 or p < 1:
        raise InfeasibleError(f"k and p must be positive, got k={k}, p={p}")
    if p + k > n:
        raise InfeasibleError(f"p + k must not exceed n, got p={p}, k={k}, n={n}")
