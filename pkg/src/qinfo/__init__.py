"""Quantum and classical Fisher information for parametric qubit models."""

__version__ = "0.1.0"
