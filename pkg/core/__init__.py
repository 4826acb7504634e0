"""Core application package."""
