"""Desk-scale discrete tri-plane 3D shape generation."""

__version__ = "0.1.0"
