"""Scene decoration toolkit: layout encoding, GAN training, metrics, service."""

__version__ = "0.1.0"
