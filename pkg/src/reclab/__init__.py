"""Recurrence and shrinking-target statistics on measure-preserving systems."""

__version__ = "0.1.0"
