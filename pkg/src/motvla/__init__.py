"""Desk-scale two-pathway vision-language-action policy."""

__version__ = "0.1.0"
