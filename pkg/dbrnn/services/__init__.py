"""Numerical and data services behind the command line."""
