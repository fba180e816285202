"""Steady low-Mach compressible Navier-Stokes on the periodic torus."""

__version__ = "0.1.0"
