"""Fingerprinting indoor localization: simulation, fingerprint databases and three matching engines."""

__version__ = "0.1.0"
