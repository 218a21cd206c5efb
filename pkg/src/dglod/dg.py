"""Discontinuous Q1 space, quadrature, and assembly of the DG forms.

The space is fully discontinuous: each element carries its own four bilinear
corner dofs (SW, SE, NW, NE), so DG coefficient vectors are plain numpy
arrays of length ``4 * n**2``.

Assembled forms, with jump [v] = v- - v+ and average {v} = (v- + v+)/2 taken
along the edge normal (minus to plus), and [v] = {v} = v on boundary edges:

* diffusion: symmetric interior penalty,
  (A grad u, grad v) + sum_e sigma_e/h_e ([u],[v])_e
  - ({n.A grad u},[v])_e - ({n.A grad v},[u])_e over all edges,
  with sigma_e = sigma_scale * max(A-, A+);
* convection: upwind-stabilized,
  (b.grad u, v) + sum_int b_e([u],[v])_e - sum_int (n.b [u],{v})_e
  + sum_bdry ((n.b)^- u, v)_e,  b_e = |b.n_e|/2 and x^- = (|x|-x)/2;
* energy-norm matrices D (weighted broken gradient plus penalty jumps) and
  Cc (b_e-weighted jumps over all edges), so |||v|||^2 = v'(D+Cc)v.

All bilinear-form integrands are polynomial of degree at most three per
variable with piecewise-constant data, so the 2-point tensor Gauss rules
used per cell and per edge are exact.  Load vectors default to a 4-point
tensor rule for oscillatory forcing.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import mesh as msh
from .solver import Factorization, finalize


def gauss01(npoints):
    """Gauss-Legendre points and weights on [0, 1], weights summing to 1."""
    x, w = leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


def shape_values(xi, eta):
    """Bilinear corner basis at reference coordinates, shape (..., 4)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1
    )

def shape_gradients(xi, eta):
    """Reference gradients of the corner basis, shape (..., 4, 2)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    gx = np.stack([-(1 - eta), (1 - eta), -eta, eta], axis=-1)
    gy = np.stack([-(1 - xi), -xi, (1 - xi), xi], axis=-1)
    return np.stack([gx, gy], axis=-1)


class DGSpace:
    """Discontinuous Q1 space on a MeshLevel: 4 dofs per element."""

    dofs_per_element = 4

    def __init__(self, level):
        self.level = level
        self.total_dofs = 4 * level.num_elements

    def element_dof_table(self):
        """(num_elements, 4) global dof indices."""
        return 4 * np.arange(self.level.num_elements)[:, None] + np.arange(4)


@dataclass
class AssemblyConfig:
    """Penalty multiplier sigma_scale (>0) and load-vector quadrature order."""

    sigma_scale: float = 10.0
    load_quad: int = 4


# which reference face of the minus/plus element an edge of each kind lies on
_EDGE_FACES = {
    msh.INTERIOR_V: ("right", "left"),
    msh.INTERIOR_H: ("top", "bottom"),
    msh.BOUNDARY_LEFT: ("left", None),
    msh.BOUNDARY_RIGHT: ("right", None),
    msh.BOUNDARY_BOTTOM: ("bottom", None),
    msh.BOUNDARY_TOP: ("top", None),
}

def _face_coords(face, s):
    if face == "left":
        return np.zeros_like(s), s
    if face == "right":
        return np.ones_like(s), s
    if face == "bottom":
        return s, np.zeros_like(s)
    return s, np.ones_like(s)  # top


class _EdgeTemplates:
    """Reference edge matrices for one edge kind (independent of h).

    P     : jump x jump            sum_q w_q [N_i][N_j]
    Qm/Qp : jump x normal-gradient sum_q w_q [N_i] (n.grad N_j)-/+
    R     : average x jump         sum_q w_q {N_i}[N_j]
    """

    def __init__(self, kind, npoints=2):
        s, w = gauss01(npoints)
        face_m, face_p = _EDGE_FACES[kind]
        normal = np.array(msh.EDGE_NORMALS[kind])
        self.interior = face_p is not None
        self.normal = normal

        tm = shape_values(*_face_coords(face_m, s))  # (q, 4)
        gm = shape_gradients(*_face_coords(face_m, s)) @ normal  # (q, 4)
        if self.interior:
            tp = shape_values(*_face_coords(face_p, s))
            gp = shape_gradients(*_face_coords(face_p, s)) @ normal
            jump = np.hstack([tm, -tp])  # (q, 8)
            avg = np.hstack([0.5 * tm, 0.5 * tp])
            grad_m = np.hstack([gm, np.zeros_like(gp)])
            grad_p = np.hstack([np.zeros_like(gm), gp])
        else:
            jump = tm
            avg = tm
            grad_m = gm
            grad_p = np.zeros_like(gm)

        self.P = jump.T @ (w[:, None] * jump)
        self.Qm = jump.T @ (w[:, None] * grad_m)
        self.Qp = jump.T @ (w[:, None] * grad_p)
        self.R = avg.T @ (w[:, None] * jump)


def _edge_templates():
    return {k: _EdgeTemplates(k) for k in range(6)}


_TEMPLATES = _edge_templates()


def _cell_templates(npoints=2):
    s, w = gauss01(npoints)
    xi, eta = np.meshgrid(s, s, indexing="ij")
    ww = np.outer(w, w).ravel()
    vals = shape_values(xi.ravel(), eta.ravel())  # (q, 4)
    grads = shape_gradients(xi.ravel(), eta.ravel())  # (q, 4, 2)
    K = np.einsum("q,qid,qjd->ij", ww, grads, grads)
    G = np.einsum("q,qi,qjd->dij", ww, vals, grads)  # G[d] = int N_i dN_j/dd
    M = np.einsum("q,qi,qj->ij", ww, vals, vals)
    return K, G, M


_K_REF, _G_REF, _M_REF = _cell_templates()


def _edge_dof_layout(space, edges):
    """Global dofs per edge: (n_edges, 8) interior or (n_edges, 4) boundary."""
    level = space.level
    em = level.edge_minus[edges]
    dm = 4 * em[:, None] + np.arange(4)
    ep = level.edge_plus[edges]
    if ep[0] >= 0:
        dp = 4 * ep[:, None] + np.arange(4)
        return np.hstack([dm, dp])
    return dm


def _scatter_blocks(rows, cols, vals, gdofs, blocks):
    """Append per-edge/cell dense blocks into COO triplet lists."""
    n, d = gdofs.shape
    r = np.repeat(gdofs, d, axis=1)  # (n, d*d) row indices
    c = np.tile(gdofs, (1, d))
    rows.append(r.ravel())
    cols.append(c.ravel())
    vals.append(blocks.reshape(n, d * d).ravel())


def assemble_diffusion(space, field, cfg):
    """Symmetric interior penalty matrix M with M[i, j] = a_d(basis_j, basis_i)."""
    level = space.level
    a_elem = field.values_on(level)
    rows, cols, vals = [], [], []

    # volume term (A grad u, grad v); reference stiffness is h-independent
    gdofs = space.element_dof_table()
    blocks = a_elem[:, None, None] * _K_REF[None, :, :]
    _scatter_blocks(rows, cols, vals, gdofs, blocks)

    for kind in range(6):
        edges = np.flatnonzero(level.edge_kind == kind)
        if edges.size == 0:
            continue
        t = _TEMPLATES[kind]
        gd = _edge_dof_layout(space, edges)
        am = a_elem[level.edge_minus[edges]]
        if t.interior:
            ap = a_elem[level.edge_plus[edges]]
            sigma = cfg.sigma_scale * np.maximum(am, ap)
            cons_m = cons_p = 0.5  # averaged flux on interior edges
        else:
            ap = np.zeros_like(am)
            sigma = cfg.sigma_scale * am
            cons_m = cons_p = 1.0  # boundary flux is the one-sided trace
        sym_m = t.Qm + t.Qm.T
        sym_p = t.Qp + t.Qp.T
        blocks = (
            sigma[:, None, None] * t.P[None]
            - cons_m * am[:, None, None] * sym_m[None]
            - cons_p * ap[:, None, None] * sym_p[None]
        )
        _scatter_blocks(rows, cols, vals, gd, blocks)

    return finalize(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (space.total_dofs, space.total_dofs),
    )


def assemble_convection(space, field):
    """Upwind convection matrix M with M[i, j] = a_c(basis_j, basis_i)."""
    level = space.level
    h = level.cell_size
    b = field.b
    rows, cols, vals = [], [], []

    # volume term (b.grad u, v), one h from the element map
    gdofs = space.element_dof_table()
    vol = h * (b[0] * _G_REF[0] + b[1] * _G_REF[1])
    _scatter_blocks(rows, cols, vals, gdofs, np.broadcast_to(vol, (gdofs.shape[0], 4, 4)))

    for kind in range(6):
        edges = np.flatnonzero(level.edge_kind == kind)
        if edges.size == 0:
            continue
        t = _TEMPLATES[kind]
        bn = float(b @ t.normal)
        if t.interior:
            b_e = 0.5 * abs(bn)
            block = h * (b_e * t.P - bn * t.R)
        else:
            inflow = 0.5 * (abs(bn) - bn)  # negative part of b.n
            if inflow == 0.0:
                continue
            block = h * inflow * t.P
        gd = _edge_dof_layout(space, edges)
        _scatter_blocks(rows, cols, vals, gd, np.broadcast_to(block, (gd.shape[0], *block.shape)))

    return finalize(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (space.total_dofs, space.total_dofs),
    )


def assemble_norm_matrices(space, field, cfg):
    """Matrices (D, Cc) of the energy norm parts: |||v|||^2 = v'(D + Cc)v.

    D holds the weighted broken gradient plus penalty-scaled jumps over all
    edges; Cc holds the b_e-weighted jumps over all edges (boundary edges
    enter with [v] = v).
    """
    level = space.level
    h = level.cell_size
    a_elem = field.values_on(level)
    b = field.b

    rows_d, cols_d, vals_d = [], [], []
    rows_c, cols_c, vals_c = [], [], []

    gdofs = space.element_dof_table()
    blocks = a_elem[:, None, None] * _K_REF[None, :, :]
    _scatter_blocks(rows_d, cols_d, vals_d, gdofs, blocks)

    for kind in range(6):
        edges = np.flatnonzero(level.edge_kind == kind)
        if edges.size == 0:
            continue
        t = _TEMPLATES[kind]
        gd = _edge_dof_layout(space, edges)
        am = a_elem[level.edge_minus[edges]]
        if t.interior:
            sigma = cfg.sigma_scale * np.maximum(am, a_elem[level.edge_plus[edges]])
        else:
            sigma = cfg.sigma_scale * am
        _scatter_blocks(rows_d, cols_d, vals_d, gd, sigma[:, None, None] * t.P[None])

        b_e = 0.5 * abs(float(b @ t.normal))
        if b_e != 0.0:
            block = h * b_e * t.P
            _scatter_blocks(rows_c, cols_c, vals_c, gd,
                            np.broadcast_to(block, (gd.shape[0], *block.shape)))

    shape = (space.total_dofs, space.total_dofs)
    D = finalize(np.concatenate(rows_d), np.concatenate(cols_d), np.concatenate(vals_d), shape)
    if rows_c:
        Cc = finalize(np.concatenate(rows_c), np.concatenate(cols_c), np.concatenate(vals_c), shape)
    else:
        Cc = finalize(np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0), shape)
    return D, Cc


def _eval_pointwise(f, X, Y):
    out = np.asarray(f(X, Y), dtype=float)
    if out.shape == X.shape:
        return out
    if out.ndim == 0:
        return np.full(X.shape, float(out))
    return np.vectorize(f)(X, Y)


def assemble_load(space, f, quad=None):
    """Load vector with entries (f, basis_i), tensor Gauss per cell."""
    level = space.level
    h = level.cell_size
    npts = 4 if quad is None else int(quad)
    s, w = gauss01(npts)
    xi, eta = np.meshgrid(s, s, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    ww = np.outer(w, w).ravel()
    vals = shape_values(xi, eta)  # (q, 4)

    x0 = level.elem_ix * h
    y0 = level.elem_iy * h
    X = x0[:, None] + h * xi[None, :]
    Y = y0[:, None] + h * eta[None, :]
    fvals = _eval_pointwise(f, X, Y)  # (cells, q)
    entries = h * h * (fvals * ww[None, :]) @ vals  # (cells, 4)
    return entries.ravel()


def assemble_mass(space):
    """L2 mass matrix of the fine space (block diagonal, h^2-scaled)."""
    level = space.level
    gdofs = space.element_dof_table()
    block = level.cell_size**2 * _M_REF
    rows, cols, vals = [], [], []
    _scatter_blocks(rows, cols, vals, gdofs, np.broadcast_to(block, (gdofs.shape[0], 4, 4)))
    return finalize(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (space.total_dofs, space.total_dofs),
    )


def energy_norm(v, D, Cc=None):
    """sqrt(v'(D + Cc)v), clamped at zero against round-off."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != D.shape[0]:
        raise ValueError("vector length %d does not match norm matrix size %d"
                         % (v.shape[0], D.shape[0]))
    val = float(v @ (D @ v))
    if Cc is not None:
        val += float(v @ (Cc @ v))
    return np.sqrt(max(val, 0.0))


def solve_reference(space, field, cfg, f):
    """Solve the fine DG system a_h(u, v) = (f, v) by sparse direct factorization."""
    A = assemble_diffusion(space, field, cfg) + assemble_convection(space, field)
    F = assemble_load(space, f, cfg.load_quad)
    return Factorization(A.tocsc()).solve(F)


def cell_averages(space, v):
    """Cell average of a DG field per element (mean of the corner values)."""
    return np.asarray(v).reshape(space.level.num_elements, 4).mean(axis=1)
