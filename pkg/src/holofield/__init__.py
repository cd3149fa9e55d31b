"""Numerical laboratory for stochastic nonlocal potentials and holographic dephasing."""

__version__ = "0.1.0"
