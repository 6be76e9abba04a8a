"""Generalization and approximation bounds for partially equivariant models on finite group actions."""

__version__ = "0.1.0"
