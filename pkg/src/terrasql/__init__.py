"""Conversational Text-to-SQL engine for spatial databases."""

__version__ = "0.1.0"
