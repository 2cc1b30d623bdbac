"""Continuous position measurement of a quantum particle under a linear force."""

__version__ = "0.1.0"
