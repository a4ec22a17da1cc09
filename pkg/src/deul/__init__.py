"""Decay of compressible Euler flows with time-dependent damping b(t) = mu (1 + t)^(-lambda)."""

from .damping import ConfigError, DampingLaw, Envelope

__all__ = ["ConfigError", "DampingLaw", "Envelope"]
__version__ = "0.1.0"
