"""Minimal-dissipation slow-driving protocols for N-body spin systems."""

__version__ = "0.1.0"
