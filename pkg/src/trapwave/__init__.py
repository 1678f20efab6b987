"""Schrodinger propagation, geodesic dynamics and norm scans on hyperbolic surfaces."""
__version__ = "0.1.0"
