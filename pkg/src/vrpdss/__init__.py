"""Truck-and-drone routing with drone speed selection."""

__version__ = "0.1.0"
