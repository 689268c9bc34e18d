"""Exact leave-p-out risk engine for the k-nearest-neighbor classifier."""

__version__ = "1.0.0"
