"""Thermodynamic length and minimally dissipative protocols for open quantum systems."""

__version__ = "0.1.0"
