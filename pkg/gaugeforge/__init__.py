"""Gauge construction for antisymmetric potentials and sub-criticality experiments."""

__version__ = "1.0.0"
