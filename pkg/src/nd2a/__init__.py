"""Nonmyopic belief-space planning over Gaussian-mixture beliefs from ambiguous data association."""

__version__ = "0.1.0"
