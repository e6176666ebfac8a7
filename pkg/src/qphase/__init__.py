"""Lie-algebraic phase reduction of continuously monitored quantum limit-cycle oscillators."""

__version__ = "0.1.0"
