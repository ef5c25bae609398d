"""Foresighted graph navigation with decay-weighted Q-features."""

__version__ = "0.1.0"
