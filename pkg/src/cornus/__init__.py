"""Cornus and baseline two-phase commit over disaggregated log storage."""
__version__ = "0.1.0"
