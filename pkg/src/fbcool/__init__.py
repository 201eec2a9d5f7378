"""Feedback cooling of a single atom in a high-finesse cavity: simulation and analysis."""

__version__ = "0.1.0"
