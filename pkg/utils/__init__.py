"""Utilities package for the NEFEM flow solver: file formats and formatting helpers."""
