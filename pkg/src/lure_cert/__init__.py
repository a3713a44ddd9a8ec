"""Absolute-stability certificates for discrete-time Lur'e systems via lifting."""

__version__ = "0.1.0"
