"""Viscous internal transition layers of 2D vortex patches."""

__version__ = "0.1.0"
