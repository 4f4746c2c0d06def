"""Saddle-point assembly for the Q2/Q1 and Q1isoQ2/Q1 Stokes discretizations.

Both discretizations share the velocity lattice, so both are assembled
from a 9-node velocity / 4-node pressure macro element on every mesh cell;
they differ only in the velocity basis (biquadratic vs. piecewise bilinear
on the four sub-cells) and hence in the quadrature used.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import mesh

DISCRETIZATIONS = ("q2q1", "q1isoq2")

# canonical type ordering shared by stencils, symbols and numeric extraction:
# ux over {node, h-edge, v-edge, center}, uy over the same, then pressure
N_TYPES = 9
PRESSURE_TYPE = 8
TYPE_NAMES = tuple(f"u{c}-{k}" for c in "xy" for k in mesh.CLASS_NAMES) + ("p",)
# lattice offset (half-h units) of each type within its period-2 cell
TYPE_OFFSETS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]] * 2 + [[0, 0]])


class AssemblyError(ValueError):
    pass


class NotToeplitzError(AssemblyError):
    pass


def _gauss(npts, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _tensor_rule(npts, box=(0.0, 1.0, 0.0, 1.0)):
    x, wx = _gauss(npts, box[0], box[1])
    y, wy = _gauss(npts, box[2], box[3])
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wy)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def _quadratic_1d(x):
    v = np.stack([2 * (x - 0.5) * (x - 1), -4 * x * (x - 1), 2 * x * (x - 0.5)], axis=-1)
    d = np.stack([4 * x - 3, -8 * x + 4, 4 * x - 1], axis=-1)
    return v, d


def _hat_1d(x):
    # nodes 0, 1/2, 1 on the two halves; evaluated strictly inside a half
    left = x < 0.5
    v = np.stack([np.where(left, 1 - 2 * x, 0.0),
                  np.where(left, 2 * x, 2 - 2 * x),
                  np.where(left, 0.0, 2 * x - 1)], axis=-1)
    d = np.stack([np.where(left, -2.0, 0.0),
                  np.where(left, 2.0, -2.0),
                  np.where(left, 0.0, 2.0)], axis=-1)
    return v, d


def _tensor_basis(one_d, pts):
    vx, dx = one_d(pts[:, 0])
    vy, dy = one_d(pts[:, 1])
    k = vx.shape[1]
    val = (vx[:, :, None] * vy[:, None, :]).transpose(0, 2, 1).reshape(len(pts), k * k)
    gx = (dx[:, :, None] * vy[:, None, :]).transpose(0, 2, 1).reshape(len(pts), k * k)
    gy = (vx[:, :, None] * dy[:, None, :]).transpose(0, 2, 1).reshape(len(pts), k * k)
    return val, np.stack([gx, gy], axis=-1)


def _quadrature(disc):
    if disc == "q2q1":
        return _tensor_rule(3)
    pts, wts = [], []
    for b in range(2):
        for a in range(2):
            p, w = _tensor_rule(2, (a / 2, (a + 1) / 2, b / 2, (b + 1) / 2))
            pts.append(p)
            wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def element_matrices(disc):
    """Reference-cell Laplacian (9x9) and divergence (4x18) for unit h.

    The Laplacian is h-independent in 2-D; the divergence block scales
    linearly with h.  Local velocity node ``a + 3*b`` sits at lattice offset
    ``(a, b)``; divergence columns are ``[x-component | y-component]``.
    """
    if disc not in DISCRETIZATIONS:
        raise AssemblyError(f"unknown discretization {disc!r}")
    pts, w = _quadrature(disc)
    _, grad = _tensor_basis(_quadratic_1d if disc == "q2q1" else _hat_1d, pts)
    q, _ = _tensor_basis(_linear_1d, pts)
    lap = np.einsum("q,qid,qjd->ij", w, grad, grad)
    div = -np.einsum("q,qk,qmd->kdm", w, q, grad).reshape(4, 18)
    return lap, div


def _linear_1d(x):
    return np.stack([1 - x, x], axis=-1), np.stack([-np.ones_like(x), np.ones_like(x)], axis=-1)


def inflow_profile(y):
    """Parabolic x-velocity on the inflow face ``1 <= y <= 2``."""
    return 4.0 * (y - 1.0) * (2.0 - y)


@dataclass(eq=False)
class SaddleSystem:
    """Block system ``K = [[A, B^T], [B, 0]]`` after Dirichlet elimination.

    Unknowns are ordered ``[ux(free nodes), uy(free nodes), p(all nodes)]``.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    rhs: np.ndarray
    grid: mesh.StructuredGrid
    velocity: mesh.DofMap
    pressure: mesh.DofMap
    disc: str
    bc_values: np.ndarray = field(default=None, repr=False)

    @property
    def n_u(self):
        return self.A.shape[0]

    @property
    def n_p(self):
        return self.B.shape[0]

    @property
    def shape(self):
        n = self.n_u + self.n_p
        return (n, n)

    @cached_property
    def K(self):
        K = sp.bmat([[self.A, self.B.T], [self.B, None]], format="csr")
        K.sort_indices()
        return K

    @cached_property
    def vel_nodes(self):
        return self.velocity.free

    def matvec(self, x):
        return self.K @ x

    def split(self, x):
        return x[:self.n_u], x[self.n_u:]

    @cached_property
    def layout(self):
        """Lattice position (half-h units) and canonical type of every unknown."""
        vc = self.velocity.coords[self.vel_nodes]
        vcls = self.velocity.node_class[self.vel_nodes].astype(np.int64)
        pos = np.concatenate([vc, vc, self.pressure.coords])
        typ = np.concatenate([vcls, vcls + 4, np.full(self.n_p, PRESSURE_TYPE)])
        return pos, typ

    @property
    def period(self):
        return 2 * self.grid.n if self.grid.periodic else 0

    @cached_property
    def nullspace(self):
        """Orthonormal basis (columns) of the known nullspace of K."""
        n = self.n_u + self.n_p
        cols = []
        if self.grid.bc in ("dirichlet", "periodic"):
            v = np.zeros(n)
            v[self.n_u:] = 1.0
            cols.append(v)
        if self.grid.bc == "periodic":
            m = len(self.vel_nodes)
            for c in range(2):
                v = np.zeros(n)
                v[c * m:(c + 1) * m] = 1.0
                cols.append(v)
        if not cols:
            return np.zeros((n, 0))
        Q = np.column_stack(cols)
        return Q / np.linalg.norm(Q, axis=0)

    @property
    def enclosed(self):
        return self.grid.bc in ("dirichlet", "periodic")

    def project_nullspace(self, x):
        """Remove the nullspace component (columns of x are independent)."""
        Q = self.nullspace
        if Q.shape[1] == 0:
            return x
        return x - Q @ (Q.T @ x)

    def mmwrite(self, path):
        scipy.io.mmwrite(str(path), self.K, comment=f"{self.disc} saddle system, n={self.grid.n}, bc={self.grid.bc}")


def _assemble(grid, spaces, disc):
    if disc not in DISCRETIZATIONS:
        raise AssemblyError(f"unknown discretization {disc!r}")
    if len(spaces.q2) == 0 or len(spaces.pressure) == 0:
        raise AssemblyError("empty DoF map")
    vel, pre = mesh.cell_nodes(grid, spaces)
    lap, div = element_matrices(disc)
    div = div * float(grid.h)
    nv, npr = len(spaces.q2), len(spaces.pressure)
    ncell = len(vel)

    rows = np.repeat(vel, 9, axis=1).ravel()
    cols = np.tile(vel, (1, 9)).ravel()
    vals = np.tile(lap.ravel(), ncell)
    A_s = sp.coo_matrix((vals, (rows, cols)), shape=(nv, nv)).tocsr()

    Bparts = []
    for c in range(2):
        blk = div[:, 9 * c:9 * (c + 1)]
        rows = np.repeat(pre, 9, axis=1).ravel()
        cols = np.tile(vel, (1, 4)).ravel()
        vals = np.tile(blk.ravel(), ncell)
        Bparts.append(sp.coo_matrix((vals, (rows, cols)), shape=(npr, nv)).tocsr())
    return A_s, Bparts


def _boundary_values(grid, dofmap):
    g = np.zeros((len(dofmap), 2))
    inflow = dofmap.tags == mesh.INFLOW
    y = dofmap.coords[inflow, 1] / (2.0 * grid.n)
    g[inflow, 0] = inflow_profile(y)
    return g


def assemble(grid, spaces, disc):
    """Assemble the saddle system for ``disc`` in {'q2q1', 'q1isoq2'}."""
    velocity = spaces.q2 if disc == "q2q1" else spaces.q1iso
    A_s, (Bx, By) = _assemble(grid, spaces, disc)
    free, fixed = velocity.free, velocity.constrained
    Af = A_s[free][:, free]
    A = sp.block_diag([Af, Af], format="csr")
    B = sp.hstack([Bx[:, free], By[:, free]], format="csr")
    g = _boundary_values(grid, velocity)
    rhs_u = np.concatenate([-(A_s[free][:, fixed] @ g[fixed, c]) for c in range(2)])
    rhs_p = -(Bx[:, fixed] @ g[fixed, 0] + By[:, fixed] @ g[fixed, 1])
    for M in (A, B):
        M.sort_indices()
    return SaddleSystem(A, B, np.concatenate([rhs_u, rhs_p]), grid, velocity,
                        spaces.pressure, disc, bc_values=g)


def assemble_q2q1(grid, spaces):
    return assemble(grid, spaces, "q2q1")


def assemble_q1isoq2(grid, spaces):
    return assemble(grid, spaces, "q1isoq2")


@dataclass
class StencilSet:
    """Translation-invariant stencils between DoF types.

    ``entries[(row_type, col_type)]`` maps a lattice offset (column position
    minus row position, in lattice units) to a coefficient.  ``unit`` is the
    number of lattice steps per mesh size h, so the Fourier phase of offset
    ``k`` at frequency ``theta`` is ``exp(i theta . k / unit)``.
    """

    n_row_types: int
    n_col_types: int
    entries: dict
    unit: int = 2
    row_offsets: np.ndarray = None
    col_offsets: np.ndarray = None

    def block(self, ti, tj):
        return self.entries.get((ti, tj), {})

    def max_offset(self):
        return max((max(abs(k[0]), abs(k[1])) for st in self.entries.values() for k in st), default=0)

    def scaled(self, factor):
        return StencilSet(self.n_row_types, self.n_col_types,
                          {key: {k: factor * v for k, v in st.items()} for key, st in self.entries.items()},
                          self.unit, self.row_offsets, self.col_offsets)

    def restrict(self, row_types, col_types):
        ri = {t: i for i, t in enumerate(row_types)}
        ci = {t: i for i, t in enumerate(col_types)}
        ent = {(ri[a], ci[b]): st for (a, b), st in self.entries.items() if a in ri and b in ci}
        return StencilSet(len(row_types), len(col_types), ent, self.unit)

    def as_arrays(self):
        """Flattened (row_type, col_type, dx, dy, value) arrays for vectorized symbols."""
        rt, ct, dx, dy, val = [], [], [], [], []
        for (a, b), st in sorted(self.entries.items()):
            for (kx, ky), v in sorted(st.items()):
                rt.append(a)
                ct.append(b)
                dx.append(kx)
                dy.append(ky)
                val.append(v)
        return (np.array(rt, dtype=np.int64), np.array(ct, dtype=np.int64),
                np.array(dx, dtype=float), np.array(dy, dtype=float), np.array(val))


def _min_image(d, period):
    if not period:
        return d
    return (d + period // 2) % period - period // 2


def _row_stencil(M, i, row_pos, col_pos, col_type, period, tol):
    start, stop = M.indptr[i], M.indptr[i + 1]
    out = {}
    for j, v in zip(M.indices[start:stop], M.data[start:stop]):
        if abs(v) <= tol:
            continue
        d = _min_image(col_pos[j] - row_pos[i], period)
        out.setdefault(int(col_type[j]), {})[(int(d[0]), int(d[1]))] = float(v)
    return out


def stencils_from_matrix(M, row_pos, row_type, col_pos, col_type, period=0,
                         n_row_types=None, n_col_types=None, rows=None,
                         samples=3, rtol=1e-12, unit=2, interior=None):
    """Read stencils off the rows of a translation-invariant sparse matrix.

    For periodic layouts offsets use the minimal image with the given
    ``period``; otherwise candidate rows are filtered by ``interior`` (a
    boolean mask).  At least ``samples`` rows per type are compared and must
    agree to ``rtol`` relative to the largest coefficient.
    """
    M = sp.csr_matrix(M)
    M.sort_indices()
    row_pos = np.asarray(row_pos)
    col_pos = np.asarray(col_pos)
    n_row_types = n_row_types or int(row_type.max()) + 1
    n_col_types = n_col_types or int(col_type.max()) + 1
    scale = np.abs(M.data).max() if M.nnz else 1.0
    tol = rtol * scale
    entries = {}
    for t in range(n_row_types):
        cand = np.flatnonzero(row_type == t)
        if interior is not None:
            cand = cand[interior[cand]]
        if rows is not None:
            cand = np.intersect1d(cand, rows)
        if len(cand) == 0:
            raise NotToeplitzError(f"no interior rows of type {t}")
        pick = cand[np.linspace(0, len(cand) - 1, min(samples, len(cand))).astype(int)]
        ref = _row_stencil(M, pick[0], row_pos, col_pos, col_type, period, tol)
        for i in pick[1:]:
            other = _row_stencil(M, i, row_pos, col_pos, col_type, period, tol)
            if set(other) != set(ref):
                raise NotToeplitzError(f"type {t}: rows {pick[0]} and {i} couple to different types")
            for ct, st in ref.items():
                ot = other[ct]
                if set(ot) != set(st) or any(abs(ot[k] - st[k]) > tol for k in st):
                    raise NotToeplitzError(f"not Toeplitz in the interior (type {t}, rows {pick[0]}, {i})")
        for ct, st in ref.items():
            entries[(t, ct)] = st
    return StencilSet(n_row_types, n_col_types, entries, unit)


def interior_mask(system, margin=10):
    """Unknowns at least ``margin`` lattice steps from any boundary node."""
    pos, _ = system.layout
    if system.grid.periodic:
        return np.ones(len(pos), dtype=bool)
    coords = system.velocity.coords
    bnd = coords[system.velocity.tags != mesh.INTERIOR]
    if len(bnd) == 0:
        return np.ones(len(pos), dtype=bool)
    # Chebyshev distance to the nearest boundary lattice point
    ok = np.ones(len(pos), dtype=bool)
    for chunk in np.array_split(np.arange(len(pos)), max(1, len(pos) // 2048)):
        d = np.abs(pos[chunk, None, :] - bnd[None, :, :]).max(axis=2).min(axis=1)
        ok[chunk] = d >= margin
    return ok


def extract_stencils(system, samples=3, margin=10):
    """9x9-type stencils of K, verified on several interior rows per type."""
    pos, typ = system.layout
    interior = None if system.grid.periodic else interior_mask(system, margin)
    st = stencils_from_matrix(system.K, pos, typ, pos, typ, system.period,
                              N_TYPES, N_TYPES, samples=samples, interior=interior)
    st.row_offsets = st.col_offsets = TYPE_OFFSETS
    return st
