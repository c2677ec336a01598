"""Cyclic test-time adaptation of a mesh regressor and a motion denoiser."""

__version__ = "0.1.0"
