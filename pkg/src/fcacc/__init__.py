"""Fuzzy cluster-aware contrastive clustering of univariate time series."""

__version__ = "0.1.0"
