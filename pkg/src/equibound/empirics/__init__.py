"""Synthetic data, exact error computation, verification suites and sweeps."""
