"""Forecasting with tuned and ensembled models: local statistical forecasters,
global neural forecasters, Hyperband and Bayesian tuning, and the analysis
tooling that turns per-run records into accuracy and latency tables."""

__version__ = "0.1.0"
