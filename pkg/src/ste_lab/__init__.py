"""Spectral transfer entropy between frequency bands of paired time series."""

__version__ = "0.1.0"
