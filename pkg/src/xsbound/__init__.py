"""Numerical and symbolic tools for multilinear multiplier norm bounds."""

__version__ = "0.1.0"
