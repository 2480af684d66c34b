"""Multiphysics finite elements for Biot consolidation with secondary compression."""

__version__ = "0.1.0"
