"""Sparsity-based STAP with joint array gain/phase error estimation."""
__version__ = "0.1.0"
