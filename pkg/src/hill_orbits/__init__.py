"""Symmetric periodic orbits of the spatial Hill lunar problem."""
