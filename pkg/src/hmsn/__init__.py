"""Hyperbolic masked siamese networks on a numpy autodiff tape."""

__version__ = "0.1.0"
