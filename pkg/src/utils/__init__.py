"""Utility helpers: errors and error logging."""
