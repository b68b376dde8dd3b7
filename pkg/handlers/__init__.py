"""Command handlers package for the NEFEM flow solver."""
