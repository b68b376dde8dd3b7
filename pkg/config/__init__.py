"""Config package for the NEFEM flow solver."""
