"""Spectral density of periodic Schroedinger operators with a Wigner-von Neumann tail."""

__version__ = "0.1.0"
