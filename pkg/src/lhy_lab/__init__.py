"""Numerical checks of a trial-state construction for the dilute Bose gas."""

__version__ = "0.1.0"
