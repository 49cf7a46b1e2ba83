"""Feedback-looped spectral graph filters and a densely connected graph CNN."""

__version__ = "0.1.0"
