"""Probabilistic en-route re-encryption with key refreshing for sensor networks."""

__version__ = "0.1.0"
