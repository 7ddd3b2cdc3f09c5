"""Voxel-wise fMRI correlation analysis with input guarding and a pseudo-oracle."""

__version__ = "0.1.0"
