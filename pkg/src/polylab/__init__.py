"""Numerical lab for impedance scattering by convex polygons and corner stability estimates."""

__version__ = "0.1.0"
