"""Two-level multiscale machinery: coarse projection, correctors, and solves.

The coarse space is the discontinuous Q1 space on the coarse mesh, injected
into the fine space (nested meshes make the injection exact).  The fine-scale
remainder space is the kernel of the elementwise L2 projection onto the
coarse space; its kernel constraint is enforced through Lagrange multipliers
on the mixed (coarse basis x fine basis) mass rows.

Correctors solve, per coarse element T and corner j, the patch-local problem

    a(phi, v) = a(lambda_Tj, v)   for all fine-scale v supported on the patch,

realized as a saddle-point system on the patch submatrices of the global
operators (zero extension outside the patch).  The corrected basis
lambda_Tj - phi_Tj spans the trial and test space of the multiscale method.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sparse

from . import dg
from .mesh import build_patch
from .solver import Factorization, SaddleFactorization, finalize

_M_REF = dg._cell_templates()[2]


class CoarseProjection:
    """Elementwise L2 projection onto the coarse space and its kernel rows.

    Attributes
    ----------
    C : csr_matrix, shape (4*NH^2, 4*Nh^2)
        Mixed mass rows: C[(T,i), :] v = (v, coarse basis i of T); the kernel
        of C is exactly the fine-scale remainder space.
    P : csr_matrix, same shape
        The projection itself (local coarse mass inverse applied to C).
    J : csr_matrix, shape (4*Nh^2, 4*NH^2)
        Injection of coarse functions into the fine space (exact).
    """

    def __init__(self, hier, C, P, J):
        self.hier = hier
        self.C = C
        self.P = P
        self.J = J

    def project(self, v):
        """Coarse coefficients of the L2 projection of a fine vector."""
        return self.P @ v


def _subcell_blocks(r):
    """Per sub-position templates for a coarse cell split into r x r children.

    Returns (mixed, inject): mixed[s][i, j] is the reference integral of
    coarse basis i times child basis j on sub-cell s = py*r + px (unit coarse
    cell, scale by H^2 * 1/r^2 off-site); inject[s][j, i] evaluates coarse
    basis i at child corner j.
    """
    s2, w2 = dg.gauss01(2)
    xi, eta = np.meshgrid(s2, s2, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    ww = np.outer(w2, w2).ravel()
    child_vals = dg.shape_values(xi, eta)  # (q, 4)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])

    mixed = np.empty((r * r, 4, 4))
    inject = np.empty((r * r, 4, 4))
    for py in range(r):
        for px in range(r):
            s = py * r + px
            cx = (px + xi) / r
            cy = (py + eta) / r
            coarse_vals = dg.shape_values(cx, cy)  # (q, 4)
            mixed[s] = np.einsum("q,qi,qj->ij", ww, coarse_vals, child_vals)
            inject[s] = dg.shape_values((px + corners[:, 0]) / r, (py + corners[:, 1]) / r)
    return mixed, inject


def build_projection(hier):
    """Build the coarse L2 projection operators for a mesh hierarchy."""
    coarse, fine = hier.coarse, hier.fine
    r = hier.ratio
    h = fine.cell_size
    nc = 4 * coarse.num_elements
    nf = 4 * fine.num_elements

    mixed, inject = _subcell_blocks(r)
    sub = (fine.elem_iy % r) * r + (fine.elem_ix % r)  # sub-position per fine element
    fe = np.arange(fine.num_elements)
    parent = hier.parent

    # C[(T,i), (fe,j)] = integral over fe of coarse_i * fine_j, fe child of T
    rows = (4 * parent[:, None, None] + np.arange(4)[None, :, None])
    cols = (4 * fe[:, None, None] + np.arange(4)[None, None, :])
    vals = h * h * mixed[sub]
    C = finalize(
        np.broadcast_to(rows, vals.shape).ravel(),
        np.broadcast_to(cols, vals.shape).ravel(),
        vals.ravel(),
        (nc, nf),
    )

    # block-diagonal inverse of the coarse element mass matrices
    H = coarse.cell_size
    minv = np.linalg.inv(H * H * _M_REF)
    P = sparse.kron(sparse.identity(coarse.num_elements, format="csr"),
                    sparse.csr_matrix(minv), format="csr") @ C

    # J[(fe,j), (T,i)] = coarse basis i of T evaluated at corner j of child fe
    jrows = (4 * fe[:, None, None] + np.arange(4)[None, :, None])
    jcols = (4 * parent[:, None, None] + np.arange(4)[None, None, :])
    jvals = inject[sub]
    J = finalize(
        np.broadcast_to(jrows, jvals.shape).ravel(),
        np.broadcast_to(jcols, jvals.shape).ravel(),
        jvals.ravel(),
        (nf, nc),
    )
    return CoarseProjection(hier, C, P.tocsr(), J)


class FineOperators:
    """Assembled fine-level operators shared by corrector and system solves."""

    def __init__(self, space, field, cfg, f=None):
        self.space = space
        self.field = field
        self.cfg = cfg
        self.diffusion = dg.assemble_diffusion(space, field, cfg)
        self.convection = dg.assemble_convection(space, field)
        self.full = (self.diffusion + self.convection).tocsr()
        self.norm_d, self.norm_c = dg.assemble_norm_matrices(space, field, cfg)
        self.load = None if f is None else dg.assemble_load(space, f, cfg.load_quad)

    def energy_norm(self, v):
        return dg.energy_norm(v, self.norm_d, self.norm_c)


class CorrectorBasis:
    """Corrector vectors phi and the corrected basis psi = lambda - phi.

    Both are sparse with one column per coarse dof (T, j) at index 4*T + j;
    corrector columns are exactly zero outside their patch dof set.
    """

    def __init__(self, mode, layers, phi, psi, patches, complete):
        self.mode = mode
        self.layers = layers  # None means ideal (full-domain) correctors
        self.phi = phi
        self.psi = psi
        self.patches = patches
        self.complete = complete  # every coarse element covered

    def corrector(self, T, j):
        """Dense fine-space vector of corrector phi_{T,j}."""
        return np.asarray(self.phi[:, 4 * T + j].todense()).ravel()

    def corrected(self, T, j):
        return np.asarray(self.psi[:, 4 * T + j].todense()).ravel()


class MultiscaleSolution:
    """Coarse coefficients over (T, j) and the assembled fine representation."""

    def __init__(self, coarse_coefficients, fine_representation):
        self.coarse_coefficients = coarse_coefficients
        self.fine_representation = fine_representation


def _normalize_mode(mode):
    if mode in ("convective", "convection"):
        return "convective"
    if mode in ("diffusion", "diffusion-only"):
        return "diffusion"
    raise ValueError("unknown corrector mode %r" % (mode,))


def _corrector_matrix(ops, mode):
    return ops.full if mode == "convective" else ops.diffusion.tocsr()


def _solve_patch_group(A, C, rhs_cols, patch, Ts):
    """Factor one patch saddle system and solve the correctors of Ts on it."""
    p = patch.fine_dofs
    rc = (4 * patch.coarse_members[:, None] + np.arange(4)).ravel()
    Ap = A[p].tocsc()[:, p]
    Cp = C[rc].tocsc()[:, p]
    fact = SaddleFactorization(Ap, Cp)
    out = {}
    for T in Ts:
        for j in range(4):
            col = 4 * T + j
            try:
                x, _ = fact.solve(rhs_cols[col])
            except Exception as exc:
                raise RuntimeError(
                    "corrector solve failed for coarse element %d, corner %d: %s"
                    % (T, j, exc)
                ) from exc
            out[col] = x
    return p, out


def compute_correctors(hier, field, cfg, proj, L, mode="convective",
                       ops=None, n_workers=1, elements=None):
    """Corrector basis for layer count L (or ideal, L=None) and corrector mode.

    mode "convective" uses the full bilinear form on both sides of the
    corrector problems; "diffusion" drops the convective part from both sides.
    Correctors for distinct coarse elements are independent; patches covering
    the same coarse region share one factorization.  Results do not depend on
    n_workers.
    """
    mode = _normalize_mode(mode)
    if ops is None:
        ops = FineOperators(dg.DGSpace(hier.fine), field, cfg)
    A = _corrector_matrix(ops, mode)
    nf = A.shape[0]
    nc = proj.C.shape[0]
    ideal = L is None or L == "ideal"

    if elements is None:
        elements = range(hier.coarse.num_elements)
    elements = sorted(int(T) for T in elements)

    # injected coarse basis vectors and their right-hand sides a(lambda, .)
    rhs_all = (A @ proj.J).tocsc()

    def rhs_col(col):
        return np.asarray(rhs_all[:, col].todense()).ravel()

    layers = hier.coarse.n - 1 if ideal else int(L)
    patches = {T: build_patch(hier, T, layers) for T in elements}

    groups = {}
    for T in elements:
        groups.setdefault(patches[T].key(), []).append(T)
    group_items = [(patches[Ts[0]], Ts) for Ts in groups.values()]

    def run_group(item):
        patch, Ts = item
        cols = {4 * T + j: rhs_col(4 * T + j)[patch.fine_dofs] for T in Ts for j in range(4)}
        return _solve_patch_group(A, proj.C, cols, patch, Ts)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_group, group_items))
    else:
        results = [run_group(item) for item in group_items]

    # merge in fixed column order so output is independent of scheduling
    columns = {}
    for (p, out) in results:
        for col, x in out.items():
            columns[col] = (p, x)

    indptr = np.zeros(nc + 1, dtype=np.int64)
    indices_parts, data_parts = [], []
    for col in range(nc):
        if col in columns:
            p, x = columns[col]
            indices_parts.append(p)
            data_parts.append(x)
            indptr[col + 1] = indptr[col] + len(p)
        else:
            indptr[col + 1] = indptr[col]
    phi = sparse.csc_matrix(
        (np.concatenate(data_parts) if data_parts else np.zeros(0),
         np.concatenate(indices_parts) if indices_parts else np.zeros(0, dtype=np.int64),
         indptr),
        shape=(nf, nc),
    )
    psi = (proj.J.tocsc() - phi).tocsc()
    return CorrectorBasis(mode, None if ideal else int(L), phi, psi, patches,
                          complete=len(columns) == nc)


def assemble_multiscale(basis, ops, load):
    """Coarse system K c = rhs over the corrected basis, with the full form."""
    if not basis.complete:
        raise ValueError("corrector basis does not cover every coarse element")
    psi = basis.psi
    K = (psi.T @ (ops.full @ psi)).tocsc()
    rhs = psi.T @ np.asarray(load, dtype=float)
    return K, rhs


def solve_multiscale(K, rhs, basis):
    """Solve the coarse multiscale system and expand to the fine space."""
    coeff = Factorization(K).solve(rhs)
    fine = basis.psi @ coeff
    return MultiscaleSolution(coeff, fine)


def relative_energy_error(u_ref, u_ms, norms):
    """|||u_ref - u_ms||| / |||u_ref||| in the energy norm given by (D, Cc)."""
    D, Cc = norms
    fine = u_ms.fine_representation if isinstance(u_ms, MultiscaleSolution) else u_ms
    ref = dg.energy_norm(u_ref, D, Cc)
    if ref == 0.0:
        raise ValueError("reference solution has zero energy norm")
    return dg.energy_norm(np.asarray(u_ref) - fine, D, Cc) / ref


def corrector_decay_profile(hier, field, cfg, proj, T, L_values,
                            mode="convective", ops=None):
    """Energy distance between ideal and localized correctors of element T.

    Returns a list of (L, max over the four corners of |||phi - phi^L|||).
    """
    if ops is None:
        ops = FineOperators(dg.DGSpace(hier.fine), field, cfg)
    ideal = compute_correctors(hier, field, cfg, proj, None, mode, ops, elements=[T])
    rows = []
    for L in L_values:
        local = compute_correctors(hier, field, cfg, proj, int(L), mode, ops, elements=[T])
        dist = max(
            ops.energy_norm(ideal.corrector(T, j) - local.corrector(T, j))
            for j in range(4)
        )
        rows.append((int(L), dist))
    return rows


def fit_decay_rate(rows, floor=1e-12):
    """Least-squares decay ratio gamma from (L, distance) rows above the floor."""
    pts = [(L, d) for (L, d) in rows if d > floor]
    if len(pts) < 2:
        return None
    Ls = np.array([p[0] for p in pts], dtype=float)
    logs = np.log([p[1] for p in pts])
    slope = np.polyfit(Ls, logs, 1)[0]
    return float(np.exp(slope))


def decompose_ideal(u, proj, basis):
    """Split a fine vector into corrected-coarse and fine-scale parts.

    Uses the ideal corrected basis: the coarse part interpolates the coarse
    projection of u through the corrected basis, the remainder lies in the
    kernel of the projection.
    """
    w = proj.project(np.asarray(u, dtype=float))
    v_ms = basis.psi @ w
    return v_ms, np.asarray(u) - v_ms


def convection_size_indicator(field, H):
    """Diagnostic H * |b| / alpha reported alongside experiment results."""
    return H * float(np.linalg.norm(field.b)) / field.alpha
