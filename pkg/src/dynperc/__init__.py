"""Biased random walk on dynamical percolation: simulation and estimators."""
__version__ = "0.1.0"
