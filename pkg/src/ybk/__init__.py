"""Numerical constructors and verifiers for integrable boundary-driven
brickwork circuits on a doubled qubit chain."""

__version__ = "0.1.0"
