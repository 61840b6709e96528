"""Mechanism-level toolkit for interaction-centric open-vocabulary scene graph generation."""

__version__ = "0.1.0"
