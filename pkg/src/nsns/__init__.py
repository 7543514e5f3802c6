"""Nitsche slip boundary conditions for incompressible Navier-Stokes."""
