"""Discontinuous Galerkin isogeometric analysis on two-patch domains with gaps."""

__version__ = "0.1.0"
