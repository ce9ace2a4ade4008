"""Lumped-element simulator of a valve-less peristaltic micropump."""

__version__ = "0.1.0"
