"""Bundled parameter and population data files."""
