"""Induced second-order submanifold geometry with a verification harness."""

__version__ = "0.1.0"
