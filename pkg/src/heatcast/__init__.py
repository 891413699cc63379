"""Probabilistic forecast combination for anomaly detection in building heat load."""

__version__ = "0.1.0"
