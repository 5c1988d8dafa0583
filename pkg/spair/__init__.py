"""Spatially-adaptive image restoration toolkit."""

__version__ = "0.1.0"
