"""Numerical verification of quasiconvexity-type conditions on polytope-like domains."""

__version__ = "0.1.0"
