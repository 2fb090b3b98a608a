"""Numerical laboratory for the multi-polaron model in a reduced Hartree-Fock crystal."""

__version__ = "0.1.0"
