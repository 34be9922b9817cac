"""Spiking-transformer diffusion policy with a toy 2D push task."""

__version__ = "0.1.0"
