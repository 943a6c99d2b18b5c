"""Learned deformable registration with global motion aggregation, plus motion-compensated MR reconstruction."""

__version__ = "0.1.0"
