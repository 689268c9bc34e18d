"""Monte-Carlo verification of the bounds and the oracle sweep of the exact estimator."""
