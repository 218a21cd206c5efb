"""Scalar diffusion rasters and constant convection fields.

The diffusion coefficient is piecewise constant on a cell-centered nx x ny
raster covering [0, 1]^2; the convection field is a constant 2-vector, which
is divergence free by construction.  The fine mesh must resolve the raster:
every raster cell boundary has to coincide with a fine-mesh cell boundary,
i.e. the fine cell count per axis is a multiple of the raster resolution.
"""

import numpy as np


class RasterFormatError(ValueError):
    """Raised for malformed raster files or invalid raster data."""


class CoefficientField:
    """Piecewise-constant diffusion raster plus a constant convection vector.

    Attributes
    ----------
    raster : ndarray, shape (ny, nx)
        Strictly positive values; row j covers the strip of height 1/ny
        centered at (j + 0.5)/ny, bottom row first.
    b : ndarray, shape (2,)
        Constant convection vector.
    alpha, beta : float
        Infimum and supremum of the raster.
    """

    def __init__(self, raster, b=(0.0, 0.0)):
        raster = np.atleast_2d(np.asarray(raster, dtype=float))
        if raster.ndim != 2:
            raise RasterFormatError("raster must be a 2-d grid")
        if not np.all(np.isfinite(raster)) or np.any(raster <= 0.0):
            raise RasterFormatError("raster values must be finite and strictly positive")
        self.raster = raster
        self.b = np.asarray(b, dtype=float).reshape(2)
        self.alpha = float(raster.min())
        self.beta = float(raster.max())

    @property
    def ny(self):
        return self.raster.shape[0]

    @property
    def nx(self):
        return self.raster.shape[1]

    def check_resolved_by(self, n):
        """Verify an n x n mesh resolves the raster; raise otherwise."""
        if n % self.nx != 0 or n % self.ny != 0:
            raise RasterFormatError(
                "mesh with %d cells/axis does not resolve a %dx%d raster"
                % (n, self.nx, self.ny)
            )

    def values_on(self, level):
        """Raster value per element of a MeshLevel, as a flat array."""
        self.check_resolved_by(level.n)
        rx = level.n // self.nx
        ry = level.n // self.ny
        return self.raster[level.elem_iy // ry, level.elem_ix // rx]


def eval_A(field, level, t):
    """Diffusion value at the centroid of element t of the given mesh level."""
    field.check_resolved_by(level.n)
    rx = level.n // field.nx
    ry = level.n // field.ny
    return field.raster[level.elem_iy[t] // ry, level.elem_ix[t] // rx]


def load_raster(path):
    """Read a raster grid from a plain-text file.

    Line 1 holds ``nx ny``; the following ny lines hold nx whitespace
    separated values each, bottom row first.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise RasterFormatError("%s: header must be 'nx ny'" % path)
        try:
            nx, ny = int(header[0]), int(header[1])
        except ValueError as exc:
            raise RasterFormatError("%s: non-integer raster dimensions" % path) from exc
        if nx < 1 or ny < 1:
            raise RasterFormatError("%s: raster dimensions must be positive" % path)
        rows = []
        for j in range(ny):
            line = fh.readline()
            if not line:
                raise RasterFormatError("%s: expected %d rows, found %d" % (path, ny, j))
            vals = line.split()
            if len(vals) != nx:
                raise RasterFormatError(
                    "%s: row %d has %d values, expected %d" % (path, j, len(vals), nx)
                )
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise RasterFormatError("%s: row %d has a non-numeric value" % (path, j)) from exc
    grid = np.array(rows)
    if np.any(grid <= 0.0) or not np.all(np.isfinite(grid)):
        raise RasterFormatError("%s: raster values must be strictly positive" % path)
    return grid


def make_layered(n, hi, lo):
    """n x n raster whose rows alternate hi, lo, hi, ... from the bottom up."""
    if n < 1:
        raise ValueError("resolution must be at least 1")
    if hi <= 0.0 or lo <= 0.0:
        raise ValueError("layer values must be strictly positive")
    grid = np.empty((n, n))
    grid[0::2, :] = hi
    grid[1::2, :] = lo
    return grid


def make_highcontrast(n, seed, alpha_floor, contrast):
    """Deterministic log-uniform n x n raster in [alpha_floor, alpha_floor*contrast].

    Values are alpha_floor * contrast**u with u uniform on [0, 1), drawn from
    a seeded generator, so equal seeds reproduce the grid exactly.
    """
    if n < 1:
        raise ValueError("resolution must be at least 1")
    if alpha_floor <= 0.0:
        raise ValueError("alpha_floor must be strictly positive")
    if contrast < 1.0:
        raise ValueError("contrast must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    return alpha_floor * contrast**u
