"""Numerical laboratory for operator calculus on the Bruhat sphere groupoid."""

__version__ = "0.1.0"
