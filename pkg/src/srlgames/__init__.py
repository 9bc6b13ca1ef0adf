"""Stochastic regularized learning in finite games: simulation and analysis."""
__version__ = "0.1.0"
