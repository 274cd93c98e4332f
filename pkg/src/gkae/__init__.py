"""Koopman autoencoders for forecasting and inpainting time-varying graph signals."""

__version__ = "0.1.0"
