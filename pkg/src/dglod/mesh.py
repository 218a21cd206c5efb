"""Nested structured quadrilateral meshes on the unit square and element patches.

Element numbering is row-major by cell: the element in column ``ix`` and row
``iy`` of an ``n x n`` grid has index ``iy*n + ix``.  Each element carries four
local corner nodes ordered SW, SE, NW, NE; the global degree of freedom of
corner ``j`` on element ``t`` is ``4*t + j``.  Edges are enumerated vertical
first (left-to-right columns, bottom-to-top within a column), then horizontal
(bottom-to-top rows, left-to-right within a row), giving ``2*n*(n+1)`` edges.

On interior edges the normal points from the minus element to the plus
element; the minus element is always the one with the smaller index, so
vertical interior normals are ``(1, 0)`` and horizontal ones ``(0, 1)``.
Boundary edges carry the outward unit normal of the domain.
"""

import math

import numpy as np

# edge kinds
INTERIOR_V = 0  # vertical interior, normal (1, 0)
INTERIOR_H = 1  # horizontal interior, normal (0, 1)
BOUNDARY_LEFT = 2  # normal (-1, 0)
BOUNDARY_RIGHT = 3  # normal (1, 0)
BOUNDARY_BOTTOM = 4  # normal (0, -1)
BOUNDARY_TOP = 5  # normal (0, 1)

EDGE_NORMALS = {
    INTERIOR_V: (1.0, 0.0),
    INTERIOR_H: (0.0, 1.0),
    BOUNDARY_LEFT: (-1.0, 0.0),
    BOUNDARY_RIGHT: (1.0, 0.0),
    BOUNDARY_BOTTOM: (0.0, -1.0),
    BOUNDARY_TOP: (0.0, 1.0),
}


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


class MeshLevel:
    """Uniform n x n quadrilateral subdivision of [0, 1]^2.

    Attributes
    ----------
    n : int
        Cells per axis (power of two).
    cell_size : float
        Edge length of each square cell, 1/n.
    num_elements : int
        n**2.
    num_edges : int
        2*n*(n+1).
    elem_ix, elem_iy : ndarray of int
        Column and row index of each element.
    edge_kind : ndarray of int
        One of the kind constants above, per edge.
    edge_minus, edge_plus : ndarray of int
        Adjacent element indices; ``edge_plus`` is -1 on boundary edges.
    edge_normal : ndarray, shape (num_edges, 2)
        Unit normal, from minus to plus element on interior edges, outward
        on boundary edges.
    """

    def __init__(self, n):
        if not _is_power_of_two(n):
            raise ValueError("cells per axis must be a power of two, got %r" % (n,))
        self.n = int(n)
        self.cell_size = 1.0 / self.n
        self.num_elements = self.n * self.n
        self.num_dofs = 4 * self.num_elements

        t = np.arange(self.num_elements)
        self.elem_ix = t % self.n
        self.elem_iy = t // self.n

        self._build_edges()

    def _build_edges(self):
        n = self.n
        nv = (n + 1) * n  # vertical edges: columns x = i/n, i = 0..n
        nh = (n + 1) * n  # horizontal edges: rows y = j/n, j = 0..n
        self.num_edges = nv + nh

        kind = np.empty(self.num_edges, dtype=np.int64)
        minus = np.empty(self.num_edges, dtype=np.int64)
        plus = np.full(self.num_edges, -1, dtype=np.int64)
        # (ix, iy) of the lower-left endpoint of each edge, in units of cell_size
        pos_x = np.empty(self.num_edges, dtype=np.int64)
        pos_y = np.empty(self.num_edges, dtype=np.int64)

        e = 0
        for i in range(n + 1):  # vertical column at x = i/n
            j = np.arange(n)
            sl = slice(e, e + n)
            pos_x[sl] = i
            pos_y[sl] = j
            if i == 0:
                kind[sl] = BOUNDARY_LEFT
                minus[sl] = j * n + 0
            elif i == n:
                kind[sl] = BOUNDARY_RIGHT
                minus[sl] = j * n + (n - 1)
            else:
                kind[sl] = INTERIOR_V
                minus[sl] = j * n + (i - 1)  # left element
                plus[sl] = j * n + i  # right element
            e += n
        for j in range(n + 1):  # horizontal row at y = j/n
            i = np.arange(n)
            sl = slice(e, e + n)
            pos_x[sl] = i
            pos_y[sl] = j
            if j == 0:
                kind[sl] = BOUNDARY_BOTTOM
                minus[sl] = i
            elif j == n:
                kind[sl] = BOUNDARY_TOP
                minus[sl] = (j - 1) * n + i
            else:
                kind[sl] = INTERIOR_H
                minus[sl] = (j - 1) * n + i  # element below
                plus[sl] = j * n + i  # element above
            e += n

        self.edge_kind = kind
        self.edge_minus = minus
        self.edge_plus = plus
        self.edge_pos_x = pos_x
        self.edge_pos_y = pos_y
        normals = np.array([EDGE_NORMALS[k] for k in range(6)])
        self.edge_normal = normals[kind]

    def element_index(self, ix, iy):
        """Element index of grid cell (ix, iy)."""
        return iy * self.n + ix

    def element_origin(self, t):
        """Lower-left corner coordinates of element t."""
        h = self.cell_size
        return self.elem_ix[t] * h, self.elem_iy[t] * h

    def element_centroids(self):
        """(num_elements, 2) array of cell centroids."""
        h = self.cell_size
        return np.column_stack(((self.elem_ix + 0.5) * h, (self.elem_iy + 0.5) * h))

    def element_dofs(self, t):
        """The four global dofs of element t, in SW, SE, NW, NE order."""
        return 4 * np.asarray(t)[..., None] + np.arange(4)

    def interior_edges(self):
        return np.flatnonzero((self.edge_kind == INTERIOR_V) | (self.edge_kind == INTERIOR_H))

    def boundary_edges(self):
        return np.flatnonzero(self.edge_kind >= BOUNDARY_LEFT)


class MeshHierarchy:
    """A coarse and a nested fine MeshLevel plus the fine-to-coarse parent map."""

    def __init__(self, coarse, fine):
        if fine.n % coarse.n != 0:
            raise ValueError(
                "fine cells per axis (%d) must be a multiple of coarse (%d)"
                % (fine.n, coarse.n)
            )
        self.coarse = coarse
        self.fine = fine
        self.ratio = fine.n // coarse.n
        r = self.ratio
        self.parent = (fine.elem_iy // r) * coarse.n + (fine.elem_ix // r)

    def children(self, T):
        """Fine element indices inside coarse element T, sorted."""
        r = self.ratio
        n = self.fine.n
        cx = self.coarse.elem_ix[T]
        cy = self.coarse.elem_iy[T]
        ix = cx * r + np.arange(r)
        iy = cy * r + np.arange(r)
        return (iy[:, None] * n + ix[None, :]).ravel()


def build_hierarchy(N_H, N_h):
    """Build nested coarse (N_H cells/axis) and fine (N_h cells/axis) meshes.

    Both counts must be powers of two with N_h >= N_H, so that every fine
    element lies inside exactly one coarse element.
    """
    if not _is_power_of_two(N_H) or not _is_power_of_two(N_h):
        raise ValueError("mesh sizes must be powers of two, got %r, %r" % (N_H, N_h))
    if N_h < N_H or N_h % N_H != 0:
        raise ValueError("fine size %d is not a refinement of coarse size %d" % (N_h, N_H))
    return MeshHierarchy(MeshLevel(N_H), MeshLevel(N_h))


class Patch:
    """L layers of vertex neighbors around a coarse element, with fine dofs.

    Layer zero is the element itself; each further layer adds every coarse
    element sharing at least a vertex with the current set, clipped at the
    domain boundary.
    """

    def __init__(self, center, layers, coarse_members, fine_members, fine_dofs):
        self.center = center
        self.layers = layers
        self.coarse_members = coarse_members
        self.fine_members = fine_members
        self.fine_dofs = fine_dofs

    def key(self):
        """Hashable identity of the covered coarse region (for solver reuse)."""
        return self.coarse_members.tobytes()


def build_patch(hier, T, L):
    """Construct the patch of L vertex-neighbor layers around coarse element T."""
    coarse = hier.coarse
    n = coarse.n
    if not 0 <= T < coarse.num_elements:
        raise ValueError("coarse element index %r out of range" % (T,))
    if L < 0:
        raise ValueError("layer count must be nonnegative")

    members = {(int(coarse.elem_ix[T]), int(coarse.elem_iy[T]))}
    for _ in range(int(L)):
        grown = set(members)
        for (ix, iy) in members:
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    jx, jy = ix + dx, iy + dy
                    if 0 <= jx < n and 0 <= jy < n:
                        grown.add((jx, jy))
        members = grown

    coarse_members = np.sort(np.array([iy * n + ix for (ix, iy) in members], dtype=np.int64))
    fine_members = np.sort(np.concatenate([hier.children(t) for t in coarse_members]))
    fine_dofs = (4 * fine_members[:, None] + np.arange(4)).ravel()
    return Patch(T, int(L), coarse_members, fine_members, fine_dofs)


def patch_layers_for(H, growth, log_base=math.e):
    """Number of patch layers ceil(growth * log(1/H)) for coarse mesh size H.

    The logarithm base is configurable; the result is clamped so that no
    patch can grow past the whole domain (L <= 1/H - 1).
    """
    if not 0.0 < H < 1.0:
        raise ValueError("coarse mesh size must lie in (0, 1), got %r" % (H,))
    if growth < 0:
        raise ValueError("growth must be nonnegative")
    if log_base <= 1.0:
        raise ValueError("log base must exceed 1")
    x = growth * math.log(1.0 / H) / math.log(log_base)
    # guard against ceil() picking up float noise on exact integers, e.g. 2*log2(32)
    L = max(0, math.ceil(x - 1e-9))
    max_layers = int(round(1.0 / H)) - 1
    return min(L, max_layers)
