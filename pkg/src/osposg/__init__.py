"""Bounds, online agents and simulation tools for one-sided partially observable stochastic games."""

__version__ = "0.1.0"
