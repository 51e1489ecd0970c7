# radioforge/configs/__init__.py
"""Shipped reference configuration and its JSON schema."""
