"""Fingerprint-based source attribution for synthesized speech."""

__version__ = "0.1.0"
