"""Numerical toolkit for linking invariants of commuting divergence-free flows."""

__version__ = "0.1.0"
