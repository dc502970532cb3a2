"""Verification lab for adaptive feedback scaling of the lattice Anderson model."""

__version__ = "0.1.0"
