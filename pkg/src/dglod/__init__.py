"""Two-level DG multiscale solver for convection-diffusion with rough coefficients."""

from . import cli, coeff, dg, lod, mesh, solver, vtkio  # noqa: F401

__version__ = "0.1.0"
