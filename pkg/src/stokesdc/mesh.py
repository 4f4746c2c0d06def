"""Structured quadrilateral meshes and DoF enumeration.

All geometry lives on an integer lattice whose spacing is half the mesh
size h.  Cell ``(ci, cj)`` covers lattice points ``2*ci .. 2*ci + 2`` in each
direction, pressure nodes sit at even lattice points and velocity nodes
(for both Q2 and Q1isoQ2) at every lattice point.  Coordinates are derived
from these integers, so nesting under refinement is exact.
"""

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np

# velocity node classes, by lattice parity (I % 2, J % 2)
NODE, HEDGE, VEDGE, CENTER = 0, 1, 2, 3
CLASS_NAMES = ("node", "h-edge", "v-edge", "center")

# boundary tags
INTERIOR, DIRICHLET, INFLOW, OUTFLOW, PERIODIC = 0, 1, 2, 3, 4
TAG_NAMES = ("interior", "dirichlet", "inflow", "outflow", "periodic-identified")

DOMAINS = ("square", "step")
BOUNDARY_KINDS = ("dirichlet", "periodic", "step")


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform mesh of congruent squares with ``n`` cells per unit length.

    ``domain`` is ``"square"`` (the unit square) or ``"step"`` (the L-shaped
    backward-facing step ``[0,2]^2 \\ [0,1)^2``).
    """

    domain: str
    n: int
    bc: str
    level: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise MeshError(f"unknown domain {self.domain!r}")
        if self.bc not in BOUNDARY_KINDS:
            raise MeshError(f"unknown boundary kind {self.bc!r}")
        if self.n < 1:
            raise MeshError("need at least one cell per unit length")
        if self.domain == "step" and self.bc != "step":
            raise MeshError("the step domain only supports bc='step'")
        if self.domain == "square" and self.bc == "step":
            raise MeshError("bc='step' requires the step domain")

    @property
    def h(self):
        return Fraction(1, self.n)

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def blocks(self):
        """Rectangular blocks as ``(x0, y0, cells_x, cells_y)`` in cell units."""
        n = self.n
        if self.domain == "square":
            return [(0, 0, n, n)]
        return [(n, 0, n, n), (0, n, n, n), (n, n, n, n)]

    @property
    def extent(self):
        """Number of cells spanned by the bounding box in each direction."""
        return self.n if self.domain == "square" else 2 * self.n

    def cells(self):
        """Cell indices ``(ci, cj)`` in a fixed lexicographic order (x fastest)."""
        out = []
        for x0, y0, nx, ny in sorted(self.blocks, key=lambda b: (b[1], b[0])):
            cj, ci = np.meshgrid(np.arange(y0, y0 + ny), np.arange(x0, x0 + nx), indexing="ij")
            out.append(np.column_stack([ci.ravel(), cj.ravel()]))
        cells = np.concatenate(out)
        order = np.lexsort((cells[:, 0], cells[:, 1]))
        return cells[order]

    def refine(self):
        return replace(self, n=2 * self.n, level=self.level - 1)

    def coarsen(self):
        if self.n % 2:
            raise MeshError(f"cannot coarsen a mesh with {self.n} cells per unit length")
        if self.periodic and self.n < 2:
            raise MeshError("periodic mesh too small to coarsen")
        return replace(self, n=self.n // 2, level=self.level + 1)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Node enumeration for one scalar space on a grid.

    ``coords`` are lattice points in half-h units, ``lookup`` maps a lattice
    point to its node number (-1 when absent).  Velocity spaces hold one entry
    per node; the two velocity components share this map.
    """

    kind: str
    coords: np.ndarray
    node_class: np.ndarray
    tags: np.ndarray
    lookup: np.ndarray
    period: int = 0

    def __len__(self):
        return len(self.coords)

    @property
    def free(self):
        return np.flatnonzero((self.tags != DIRICHLET) & (self.tags != INFLOW))

    @property
    def constrained(self):
        return np.flatnonzero((self.tags == DIRICHLET) | (self.tags == INFLOW))

    def node_at(self, I, J):
        I = np.asarray(I)
        J = np.asarray(J)
        if self.period:
            I = I % self.period
            J = J % self.period
        else:
            bad = (I < 0) | (J < 0) | (I >= self.lookup.shape[0]) | (J >= self.lookup.shape[1])
            if np.any(bad):
                I = np.where(bad, 0, I)
                J = np.where(bad, 0, J)
                return np.where(bad, -1, self.lookup[I, J])
        return self.lookup[I, J]

    def same_nodes(self, other):
        a = {tuple(c) for c in self.coords.tolist()}
        b = {tuple(c) for c in other.coords.tolist()}
        return a == b


class Spaces(NamedTuple):
    q2: DofMap
    q1iso: DofMap
    pressure: DofMap


def _vectorized_mask(grid, stride):
    cells = grid.cells()
    m = 2 * grid.extent
    mask = np.zeros((m + 1, m + 1), dtype=bool)
    offs = np.arange(0, 3, stride)
    for a in offs:
        for b in offs:
            mask[2 * cells[:, 0] + a, 2 * cells[:, 1] + b] = True
    return mask


def _boundary_tags(grid, coords):
    I, J = coords[:, 0], coords[:, 1]
    tags = np.full(len(coords), INTERIOR, dtype=np.int8)
    if grid.periodic:
        tags[(I == 0) | (J == 0)] = PERIODIC
        return tags
    m = 2 * grid.extent
    if grid.domain == "square":
        on = (I == 0) | (J == 0) | (I == m) | (J == m)
        tags[on] = DIRICHLET
        return tags
    # step: [0, 2]^2 minus [0, 1)^2 with half-h lattice extent m = 4N
    half = m // 2
    on_outer = (I == 0) | (J == 0) | (I == m) | (J == m)
    on_step = ((I == half) & (J <= half)) | ((J == half) & (I <= half))
    tags[on_outer | on_step] = DIRICHLET
    tags[(I == m) & (J > 0) & (J < m)] = OUTFLOW
    tags[(I == 0) & (J > half) & (J < m)] = INFLOW
    return tags


def _dofmap(grid, kind, stride):
    if grid.periodic:
        period = 2 * grid.n
        I, J = np.meshgrid(np.arange(0, period, stride), np.arange(0, period, stride), indexing="ij")
        mask = np.zeros((period, period), dtype=bool)
        mask[I, J] = True
    else:
        period = 0
        mask = _vectorized_mask(grid, stride)
    # number nodes with x fastest for a stable ordering
    Js, Is = np.nonzero(mask.T)
    coords = np.column_stack([Is, Js]).astype(np.int64)
    lookup = np.full(mask.shape, -1, dtype=np.int64)
    lookup[Is, Js] = np.arange(len(coords))
    # parity (1, 0) -> h-edge, (0, 1) -> v-edge, (1, 1) -> center
    node_class = ((coords[:, 0] % 2) + 2 * (coords[:, 1] % 2)).astype(np.int8)
    tags = _boundary_tags(grid, coords)
    if stride == 2:
        # pressure is never constrained; keep only the periodic seam marker
        node_class[:] = NODE
        tags[tags != PERIODIC] = INTERIOR
    return DofMap(kind, coords, node_class, tags, lookup, period)


def build_spaces(grid):
    velocity = _dofmap(grid, "q2", 1)
    q1iso = replace(velocity, kind="q1iso")
    return Spaces(velocity, q1iso, _dofmap(grid, "q1", 2))


def build_unit_square(n_cells_per_side, bc="dirichlet"):
    """Unit square mesh with ``n`` cells per side and its DoF maps."""
    if n_cells_per_side < 1:
        raise MeshError("need at least 1 cell per side")
    if bc not in ("dirichlet", "periodic"):
        raise MeshError(f"unit square supports dirichlet or periodic, not {bc!r}")
    grid = StructuredGrid("square", int(n_cells_per_side), bc)
    return grid, build_spaces(grid)


def build_step_domain(refinement):
    """Backward-facing step with ``2**refinement`` cells per unit length."""
    if refinement < 0:
        raise MeshError("refinement must be nonnegative")
    grid = StructuredGrid("step", 2 ** int(refinement), "step")
    return grid, build_spaces(grid)


def cell_nodes(grid, spaces):
    """Per-cell node numbers: velocity (ncell, 9) and pressure (ncell, 4).

    Local velocity numbering is ``a + 3*b`` for lattice offsets ``(a, b)``,
    local pressure numbering ``a + 2*b`` for corner ``(a, b)``.
    """
    cells = grid.cells()
    I0, J0 = 2 * cells[:, 0], 2 * cells[:, 1]
    vel = np.empty((len(cells), 9), dtype=np.int64)
    for b in range(3):
        for a in range(3):
            vel[:, a + 3 * b] = spaces.q2.node_at(I0 + a, J0 + b)
    pre = np.empty((len(cells), 4), dtype=np.int64)
    for b in range(2):
        for a in range(2):
            pre[:, a + 2 * b] = spaces.pressure.node_at(I0 + 2 * a, J0 + 2 * b)
    if np.any(vel < 0) or np.any(pre < 0):
        raise MeshError("cell references a missing node")
    return vel, pre


def coarse_to_fine(coarse, fine):
    """Fine node number of every coarse node (coarse lattice doubles onto fine)."""
    idx = fine.node_at(2 * coarse.coords[:, 0], 2 * coarse.coords[:, 1])
    if np.any(idx < 0):
        raise MeshError("coarse node set is not nested in the fine node set")
    return idx


def fine_to_coarse(coarse, fine):
    """Inverse of :func:`coarse_to_fine` on the nested nodes (-1 elsewhere)."""
    out = np.full(len(fine), -1, dtype=np.int64)
    out[coarse_to_fine(coarse, fine)] = np.arange(len(coarse))
    return out


def node_xy(dofmap, grid):
    """Physical coordinates of the nodes (derived, never stored)."""
    return dofmap.coords / (2.0 * grid.n)


def count_dofs(spaces, include_constrained=True):
    if include_constrained:
        return 2 * len(spaces.q2) + len(spaces.pressure)
    return 2 * len(spaces.q2.free) + len(spaces.pressure.free)
