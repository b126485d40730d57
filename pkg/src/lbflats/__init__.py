"""Hybrid linear modeling by randomized local best-fit flats."""

__version__ = "0.1.0"
