"""Wireframe sketch-to-depth toolkit."""

__version__ = "0.1.0"
