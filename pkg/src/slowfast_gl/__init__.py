"""Slow-fast stochastic cubic-quintic Ginzburg-Landau system: simulation and averaging checks."""

__version__ = "0.1.0"
