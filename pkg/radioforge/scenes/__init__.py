# radioforge/scenes/__init__.py
"""Packaged synthetic OSM scenes."""
