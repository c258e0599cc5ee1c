"""Simulator for suffix reliable broadcast over bounded lossy links."""

__version__ = "0.1.0"
