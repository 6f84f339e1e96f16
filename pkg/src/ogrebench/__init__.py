"""Desk-scale dual-paradigm cluster simulator with a K-means benchmark harness."""

__version__ = "0.1.0"
