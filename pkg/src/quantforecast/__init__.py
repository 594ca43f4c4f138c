"""Quantile deep sequence models and linear baselines for multi-step
time-series forecasting, with a reproducible experiment harness."""

__version__ = "0.1.0"
