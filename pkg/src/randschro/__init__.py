"""Simulation and validation tools for critical and decaying 1D random Schrödinger operators."""

__version__ = "0.1.0"
