"""Rotationally symmetric self-expanders, normal graphs and relative entropy."""

__version__ = "0.1.0"
