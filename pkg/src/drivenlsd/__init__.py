"""Localization statistics of the local spectral density of a periodically
driven band random matrix with disordered diagonal."""

__version__ = "0.1.0"
