"""Optimal branch exchange for radial distribution-network reconfiguration."""

__version__ = "0.1.0"
