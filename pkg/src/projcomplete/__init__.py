"""Numerical tools for projective completeness of geodesics."""

__version__ = "0.1.0"
