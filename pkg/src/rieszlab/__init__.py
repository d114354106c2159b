"""Numerical laboratory for smoothed s-Riesz transforms of discrete measures."""

__version__ = "0.1.0"
