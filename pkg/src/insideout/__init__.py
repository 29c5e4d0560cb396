"""Reproducible 7-class facial-emotion-recognition pipeline for FER2013 data."""

__version__ = "0.1.0"
