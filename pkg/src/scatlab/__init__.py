"""Scattering, Jacobi fields and volume growth on asymptotically Euclidean metrics."""
__version__ = "0.1.0"
