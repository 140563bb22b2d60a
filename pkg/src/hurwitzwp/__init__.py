"""Numerical Weil-Petersson geometry of hyperelliptic branched coverings of the sphere."""

__version__ = "0.1.0"
