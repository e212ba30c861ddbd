"""Quantum-ratchet qubit transport in optical superlattices."""

__version__ = "0.1.0"
