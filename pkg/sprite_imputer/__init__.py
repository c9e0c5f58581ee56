"""Pose imputation for pixel-art character sprites."""

__version__ = "1.0.0"
