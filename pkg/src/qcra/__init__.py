"""Quasi-cyclic repeat-accumulate codes for CV-QKD reconciliation."""

__version__ = "0.1.0"
