"""Multi-bump solutions of a Schrödinger-Poisson system with deep potential wells."""

__version__ = "0.1.0"
