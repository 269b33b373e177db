"""Majority population protocols on interaction graphs: simulation,
birth-death analysis and exhaustive verification."""

__version__ = "0.1.0"
