"""Desk-scale numerics for tagged-particle kinetic limits in random force fields."""

__version__ = "0.1.0"
