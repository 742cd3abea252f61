"""Dynamical determinants and Ruelle resonances for coded hyperbolic suspension flows."""

__version__ = "0.1.0"
