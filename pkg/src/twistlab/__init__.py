"""Computational laboratory for weighted badly approximable vectors and
twisted inhomogeneous Diophantine approximation on the 2-torus."""

__version__ = "0.1.0"
