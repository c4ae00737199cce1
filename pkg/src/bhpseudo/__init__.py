"""Pseudoclassical simulation of the Bose-Hubbard model."""

__version__ = "0.1.0"
