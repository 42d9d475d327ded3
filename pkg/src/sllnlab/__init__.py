"""Simulation and numerical checks for strong laws of large numbers of
random fields indexed by multidimensional lattices."""

__version__ = "0.1.0"
