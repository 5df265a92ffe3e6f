"""Subgrid-artificial-viscosity stabilized Navier-Stokes solver (BDF2, Taylor-Hood)."""

__version__ = "0.1.0"
