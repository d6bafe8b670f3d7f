"""Accuracy-first differential privacy with ex-post Rényi DP accounting."""

__version__ = "0.1.0"
