"""Commonsense knowledge from scene graphs and text for cleanup text games."""

__version__ = "0.1.0"
