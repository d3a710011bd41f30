"""Adversarial representation balancing for treatment-effect estimation."""

__version__ = "0.1.0"
