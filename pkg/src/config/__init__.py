"""Configuration management for the Korn laboratory."""
