"""Numerical laboratory for the mean-field derivation of the cubic NLS from Bose dynamics."""
__version__ = "0.1.0"
