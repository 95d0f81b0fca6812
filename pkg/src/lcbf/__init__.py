"""Hybrid beamforming simulation: LC pattern codebooks, manifold-projected
precoding and closed-form liquid networks."""

__version__ = "0.1.0"
