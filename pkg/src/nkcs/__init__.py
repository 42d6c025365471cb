"""NKCS coupled fitness landscapes under unilateral, confederated and central governance."""

__version__ = "0.1.0"
