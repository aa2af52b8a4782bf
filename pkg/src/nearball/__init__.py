"""Numerical companion for spectral stability of the Dirichlet Laplacian near the ball."""

__version__ = "0.1.0"
