"""Desk-scale laboratory for exact vs. Hartree-Fock fermion dynamics on the torus."""

__version__ = "0.1.0"
