"""Core numerics package for the NEFEM flow solver."""
