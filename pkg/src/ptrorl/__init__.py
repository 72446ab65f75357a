"""Transition-based opinion role labeling with pointer-network term boundaries."""

__version__ = "0.1.0"
