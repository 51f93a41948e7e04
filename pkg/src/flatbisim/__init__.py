"""Finite bisimilar abstractions of flat hybrid systems and bounded LTL vulnerability checks."""

__version__ = "0.1.0"
