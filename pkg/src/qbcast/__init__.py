"""Numerical toolkit for one-shot quantum broadcast coding quantities."""
__version__ = "0.1.0"
