"""Simulation laboratory for interference in semantic kernel-threshold memories."""

__version__ = "0.1.0"
