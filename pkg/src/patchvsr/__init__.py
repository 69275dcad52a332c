"""Patch-wise video super-resolution by rectified-flow latent diffusion."""

__version__ = "0.1.0"
