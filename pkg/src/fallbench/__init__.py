"""Benchmark falls-prediction strategies under shared nested cross-validation."""

__version__ = "0.1.0"
