"""Sparse direct factorization and constrained (saddle-point) solves.

Operators are scipy.sparse matrices in CSR/CSC form; assembly routines
finalize COO triplets through :func:`finalize`, which sums duplicates in a
deterministic order.  Constrained problems (minimize/solve over the kernel of
a constraint matrix C) are handled with Lagrange multipliers through one
monolithic LU factorization of the KKT block matrix.
"""

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as spla


class SingularOperatorError(RuntimeError):
    """Factorization failed because the operator is singular."""


class RankDeficientConstraintError(ValueError):
    """Constraint rows are linearly dependent; names the offending rows."""

    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__("constraint rows %s are linearly dependent" % (self.rows,))


def finalize(rows, cols, vals, shape):
    """Assemble COO triplets into CSR, summing duplicate (row, col) entries."""
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat


def _check_structurally_nonsingular(A):
    csr = A.tocsr()
    row_counts = np.diff(csr.indptr)
    if np.any(row_counts == 0):
        raise SingularOperatorError(
            "structurally singular: row %d is empty" % int(np.flatnonzero(row_counts == 0)[0])
        )
    csc = A.tocsc()
    col_counts = np.diff(csc.indptr)
    if np.any(col_counts == 0):
        raise SingularOperatorError(
            "structurally singular: column %d is empty" % int(np.flatnonzero(col_counts == 0)[0])
        )


class Factorization:
    """Reusable LU factorization of a square sparse operator."""

    def __init__(self, A):
        A = sparse.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("operator must be square, got shape %r" % (A.shape,))
        _check_structurally_nonsingular(A)
        self.shape = A.shape
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularOperatorError("numerically singular operator: %s" % exc) from exc

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError("rhs length %d does not match operator size %d"
                             % (rhs.shape[0], self.shape[0]))
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularOperatorError("solve produced non-finite entries")
        return x


def factorize(A):
    """LU-factorize a square sparse operator for repeated solves."""
    return Factorization(A)


def is_positive_definite(M):
    """Whether a symmetric sparse matrix is positive definite.

    Uses an LU factorization restricted to diagonal pivoting: for a symmetric
    matrix this succeeds with no row swaps and all positive pivots exactly
    when the matrix is positive definite.
    """
    M = sparse.csc_matrix(M)
    try:
        lu = spla.splu(M, diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError:
        return False
    # no row pivoting beyond the symmetric fill-reducing permutation, and all
    # pivots positive, is an L D L^T factorization with positive D
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return False
    return bool(np.all(lu.U.diagonal() > 0.0))


class SaddleSystem:
    """A x + C^T mu = rhs, C x = 0 with m constraint rows on n unknowns."""

    def __init__(self, A, C, rhs):
        self.A = sparse.csr_matrix(A)
        self.C = sparse.csr_matrix(C)
        self.rhs = np.asarray(rhs, dtype=float)
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ValueError("A must be square")
        if self.C.shape[1] != n:
            raise ValueError("C has %d columns, expected %d" % (self.C.shape[1], n))
        if self.C.shape[0] > n:
            raise ValueError("more constraints than unknowns")
        if self.rhs.shape[0] != n:
            raise ValueError("rhs length %d, expected %d" % (self.rhs.shape[0], n))


def _diagnose_constraint_rank(C):
    """Name dependent constraint rows via a pivoted QR of C^T (failure path)."""
    dense = np.asarray(C.todense())
    if dense.size == 0:
        return
    _, R, piv = scipy.linalg.qr(dense.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    tol = max(dense.shape) * np.finfo(float).eps * diag.max()
    rank = int(np.count_nonzero(diag > tol))
    if rank < C.shape[0]:
        raise RankDeficientConstraintError(sorted(int(r) for r in piv[rank:]))


class SaddleFactorization:
    """Factorization of the KKT block [[A, C^T], [C, 0]], reusable over rhs."""

    def __init__(self, A, C):
        A = sparse.csc_matrix(A)
        C = sparse.csc_matrix(C)
        self.n = A.shape[0]
        self.m = C.shape[0]
        if self.m == 0:
            self._fact = factorize(A)
            return
        kkt = sparse.bmat([[A, C.T], [C, None]], format="csc")
        try:
            self._fact = factorize(kkt)
        except SingularOperatorError:
            _diagnose_constraint_rank(C)
            raise

    def solve(self, rhs):
        """Solve for (x, multipliers) with the constraint right-hand side zero."""
        rhs = np.asarray(rhs, dtype=float)
        if self.m == 0:
            return self._fact.solve(rhs), np.zeros(0)
        full = np.concatenate([rhs, np.zeros(self.m)])
        sol = self._fact.solve(full)
        return sol[: self.n], sol[self.n :]


def solve_saddle(sys):
    """Solve a SaddleSystem; returns the primal solution and the multipliers."""
    fact = SaddleFactorization(sys.A, sys.C)
    return fact.solve(sys.rhs)
