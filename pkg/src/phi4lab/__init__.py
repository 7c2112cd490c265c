"""Lattice Phi^4_3 stochastic quantization laboratory."""
__version__ = "0.1.0"
