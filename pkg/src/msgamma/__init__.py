"""Numerical checks of Gamma-class identities for toric Fano varieties and
their Laurent polynomial mirrors."""

__version__ = "0.1.0"
