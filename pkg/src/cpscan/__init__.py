"""Structured-light scanning with phase-shifted fringes and Gray codes: patterns, decoding,
calibration, triangulation, metrology and a synthetic scanner."""

__version__ = "0.1.0"
