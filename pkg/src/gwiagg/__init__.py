"""Aggregation of subcritical Galton-Watson processes with heavy-tailed immigration."""

__version__ = "0.1.0"
