"""Contactless SpO2 estimation from skin color signals extracted from hand videos."""

__version__ = "0.1.0"
