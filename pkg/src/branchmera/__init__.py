"""Branching MERA and exact decoupling for one-dimensional spin chains."""
__version__ = "0.1.0"
