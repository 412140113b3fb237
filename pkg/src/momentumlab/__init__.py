"""Momentum analytics for point-by-point tennis data."""

__version__ = "0.1.0"
