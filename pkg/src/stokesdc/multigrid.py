"""Defect-correction multigrid: Q2/Q1 on level 0, Q1isoQ2/Q1 on levels >= 1.

Levels 0 and 1 share their unknowns, so residuals and corrections pass
between them unchanged.  Below level 1 the hierarchy is an ordinary
geometric one with bilinear interpolation and Galerkin coarse operators.
"""

from dataclasses import dataclass, asdict, fields
import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, mesh
from .relaxation import Relaxer

log = logging.getLogger(__name__)

DENSE_COARSE_LIMIT = 2500


class HierarchyError(ValueError):
    pass


@dataclass
class CycleParams:
    """Parameters of one defect-correction cycle.

    ``omega0`` damps relaxation on the Q2/Q1 level, ``omega1`` on every
    Q1isoQ2/Q1 level; IBSR additionally uses ``(alpha0, beta0)`` and
    ``(alpha1, beta1)``.  Levels >= 1 always use one pre- and one
    post-relaxation sweep.
    """

    nu1: int = 1
    nu2: int = 1
    gamma: int = 1
    tau: float = 1.0
    omega0: float = 1.0
    omega1: float = 1.0
    relaxer: str = "vanka"
    cycle: str = "V"
    alpha0: float = None
    beta0: float = None
    alpha1: float = None
    beta1: float = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.nu1 < 0 or self.nu2 < 0 or self.gamma < 0:
            raise ValueError("sweep and cycle counts must be nonnegative")
        if not 0 < self.tau < 2:
            raise ValueError(f"tau must lie in (0, 2), got {self.tau}")
        if self.cycle not in ("V", "W"):
            raise ValueError(f"cycle must be 'V' or 'W', got {self.cycle!r}")
        if self.relaxer not in ("vanka", "bsr"):
            raise ValueError(f"unknown relaxer {self.relaxer!r}")
        if self.relaxer == "bsr":
            for lvl, omega in ((0, self.omega0), (1, self.omega1)):
                a, b = self.bsr_params(lvl)
                if omega != 0 and (a is None or b is None):
                    raise ValueError(f"IBSR on level {lvl} needs alpha{lvl} and beta{lvl}")
                if a is not None and a <= 0:
                    raise ValueError("alpha must be positive")

    def bsr_params(self, level):
        return (self.alpha0, self.beta0) if level == 0 else (self.alpha1, self.beta1)

    def omega(self, level):
        return self.omega0 if level == 0 else self.omega1

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown cycle fields: {sorted(unknown)}")
        return cls(**d)


class CoarseSolver:
    """Minimum-norm solve with the coarsest (possibly singular) operator.

    Small systems use a dense SVD pseudoinverse with a relative cutoff of
    1e-12.  Larger ones border ``K`` with its known nullspace basis ``Q`` and
    factor ``[[K, Q], [Q^T, 0]]``; for symmetric ``K`` this returns exactly
    ``K^+ r``.
    """

    def __init__(self, system, dense_limit=DENSE_COARSE_LIMIT, rcond=1e-12):
        self.system = system
        K = system.K
        Q = system.nullspace
        n = K.shape[0]
        self.dense = n <= dense_limit
        if self.dense:
            U, s, Vt = np.linalg.svd(K.toarray())
            cut = rcond * s[0]
            null = int(np.sum(s <= cut))
            self.null_dim = null
            if null != Q.shape[1]:
                msg = f"coarsest operator has {null} near-zero singular values, expected {Q.shape[1]}"
                if system.enclosed:
                    warnings.warn(msg, RuntimeWarning)
                else:
                    log.info(msg)
            sinv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
            self.pinv = (Vt.T * sinv) @ U.T
        else:
            k = Q.shape[1]
            self.null_dim = k
            if k:
                Qs = sp.csr_matrix(Q)
                Kb = sp.bmat([[K, Qs], [Qs.T, None]], format="csc")
            else:
                Kb = K.tocsc()
            self.lu = spla.splu(Kb)
            self.n = n

    def __call__(self, r):
        if self.dense:
            return self.pinv @ r
        k = self.null_dim
        if k:
            pad = np.zeros((k,) + r.shape[1:])
            return self.lu.solve(np.concatenate([r, pad]))[:self.n]
        return self.lu.solve(r)


def coarsest_solve(K_system, r):
    return CoarseSolver(K_system)(r)


def _interp_1d(X, spacing):
    """Coarse lattice coordinates and weights for a fine coordinate array."""
    rem = X % spacing
    on = rem == 0
    lo = X - rem
    left = np.where(on, X, lo)
    right = np.where(on, X, lo + spacing)
    w = np.where(on, 1.0, 0.5)
    return left, right, w, on


def nodal_interpolation(coarse, fine, spacing):
    """Bilinear interpolation between nested node sets (all nodes, no bc).

    ``spacing`` is the coarse node spacing in fine lattice units (2 for
    velocity, 4 for pressure).  Coarse coordinates are half the fine ones.
    """
    X, Y = fine.coords[:, 0], fine.coords[:, 1]
    lx, rx, wx, onx = _interp_1d(X, spacing)
    ly, ry, wy, ony = _interp_1d(Y, spacing)
    rows, cols, vals = [], [], []
    ar = np.arange(len(fine))
    for cx, use_x in ((lx, np.ones_like(onx)), (rx, ~onx)):
        for cy, use_y in ((ly, np.ones_like(ony)), (ry, ~ony)):
            use = use_x & use_y
            idx = coarse.node_at(cx[use] // 2, cy[use] // 2)
            if np.any(idx < 0):
                raise HierarchyError("interpolation stencil references a missing coarse node")
            rows.append(ar[use])
            cols.append(idx)
            vals.append((wx * wy)[use])
    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(fine), len(coarse))).tocsr()
    P.sum_duplicates()
    return P


def transfer_operator(coarse_sys, fine_sys):
    """Block interpolation ``diag(P_u, P_u, P_p)`` restricted to free DoFs."""
    Pn = nodal_interpolation(coarse_sys.velocity, fine_sys.velocity, 2)
    Pn = Pn[fine_sys.vel_nodes][:, coarse_sys.vel_nodes]
    Pp = nodal_interpolation(coarse_sys.pressure, fine_sys.pressure, 4)
    P = sp.block_diag([Pn, Pn, Pp], format="csr")
    P.sort_indices()
    return P, Pn, Pp


def galerkin_system(fine_sys, coarse_grid):
    """Coarse Q1isoQ2/Q1 system ``R K P`` with ``R = P^T``."""
    spaces = mesh.build_spaces(coarse_grid)
    shell = assembly.SaddleSystem(sp.csr_matrix((0, 0)), sp.csr_matrix((0, 0)), None, coarse_grid,
                                  spaces.q1iso, spaces.pressure, "galerkin")
    P, Pn, Pp = transfer_operator(shell, fine_sys)
    Pv = sp.block_diag([Pn, Pn], format="csr")
    A = (Pv.T @ fine_sys.A @ Pv).tocsr()
    B = (Pp.T @ fine_sys.B @ Pv).tocsr()
    A.sort_indices()
    B.sort_indices()
    n = A.shape[0] + B.shape[0]
    coarse = assembly.SaddleSystem(A, B, np.zeros(n), coarse_grid, spaces.q1iso, spaces.pressure,
                                   "galerkin")
    return coarse, P


class _Identity:
    omega = 0.0

    def __call__(self, x, b):
        return x


class MgHierarchy:
    """Level 0: Q2/Q1, level 1: Q1isoQ2/Q1 at the same h, levels 2..depth:
    Galerkin coarsenings at 2h, 4h, ...  ``depth`` counts the h-multigrid
    levels only (levels 1..depth)."""

    def __init__(self, grid, params, depth, systems=None, dense_limit=DENSE_COARSE_LIMIT):
        if depth < 1:
            raise HierarchyError("depth must be at least 1")
        if grid.n % (2 ** (depth - 1)):
            raise HierarchyError(f"{grid.n} cells per unit length do not admit {depth - 1} coarsenings")
        self.params = params
        self.depth = depth
        self.grid = grid
        if systems is None:
            spaces = mesh.build_spaces(grid)
            systems = [assembly.assemble(grid, spaces, "q2q1"), assembly.assemble(grid, spaces, "q1isoq2")]
        self.systems = list(systems)
        self.P = {}
        g = grid
        for lvl in range(2, depth + 1):
            g = g.coarsen()
            coarse, P = galerkin_system(self.systems[-1], g)
            self.P[lvl - 1] = P
            self.systems.append(coarse)
        self.coarse_solver = CoarseSolver(self.systems[-1], dense_limit)
        self.low_order_solve = None
        self.set_params(params)

    def set_params(self, params):
        """Rebuild relaxers for new cycle parameters (reusing setups when only
        the damping changes)."""
        params.validate()
        self.params = params
        old = getattr(self, "relax", {})
        self.relax = {}
        for lvl in range(self.depth):
            omega = params.omega(lvl)
            alpha, beta = params.bsr_params(lvl)
            key = (params.relaxer, alpha, beta)
            prev = old.get(lvl)
            if prev is not None and prev[0] == key:
                prev[1].omega = omega
                self.relax[lvl] = prev
            elif omega == 0.0:
                self.relax[lvl] = (None, _Identity())
            else:
                self.relax[lvl] = (key, Relaxer(self.systems[lvl], params.relaxer, omega, alpha, beta))

    def relaxer(self, lvl):
        return self.relax[lvl][1]

    @property
    def K(self):
        return self.systems[0].K

    def R(self, lvl):
        return self.P[lvl].T

    def _relax(self, lvl, x, b):
        return self.relaxer(lvl)(x, b)

    def h_cycle(self, lvl, x, b, kind=None):
        """One (1,1) V- or W-cycle on level ``lvl >= 1``."""
        kind = kind or self.params.cycle
        if lvl < 1:
            raise HierarchyError("h-cycles run on levels >= 1")
        if lvl == self.depth:
            return self.coarse_solver(b)
        K = self.systems[lvl].K
        x = self._relax(lvl, x, b)
        rc = self.P[lvl].T @ (b - K @ x)
        if lvl + 1 == self.depth:
            ec = self.coarse_solver(rc)
        else:
            ec = np.zeros_like(rc)
            for _ in range(1 if kind == "V" else 2):
                ec = self.h_cycle(lvl + 1, ec, rc, kind)
        x = x + self.P[lvl] @ ec
        return self._relax(lvl, x, b)

    def low_order_correction(self, r):
        """``(I - G_1^gamma) K_1^{-1} r``: gamma h-cycles from a zero guess."""
        if self.low_order_solve is not None:
            return self.low_order_solve(r)
        e = np.zeros_like(r)
        for _ in range(self.params.gamma):
            e = self.h_cycle(1, e, r)
        return e

    def dc_cycle(self, x, b):
        """One defect-correction cycle on the Q2/Q1 system."""
        p = self.params
        sys0 = self.systems[0]
        K0 = sys0.K
        for _ in range(p.nu1):
            x = self._relax(0, x, b)
        if p.gamma > 0 or self.low_order_solve is not None:
            r = sys0.project_nullspace(b - K0 @ x)
            e = sys0.project_nullspace(self.low_order_correction(r))
            x = x + p.tau * e
        for _ in range(p.nu2):
            x = self._relax(0, x, b)
        return x

    def precondition(self, r):
        return self.dc_cycle(np.zeros_like(r), r)

    def error_operator(self):
        """Dense error propagator of :meth:`dc_cycle` (tiny grids only)."""
        n = self.systems[0].shape[0]
        return self.dc_cycle(np.eye(n), np.zeros((n, n)))

    def h_error_operator(self, lvl=1):
        n = self.systems[lvl].shape[0]
        return self.h_cycle(lvl, np.eye(n), np.zeros((n, n)))

    def memory_bytes(self):
        total = 0
        for s in self.systems:
            total += s.K.data.nbytes * 2 + s.K.indices.nbytes * 2
        for _, r in self.relax.values():
            if getattr(r, "kind", None) == "vanka":
                total += r.impl.nbytes()
        return total


def build_hierarchy(grid, params, depth, dense_limit=DENSE_COARSE_LIMIT):
    return MgHierarchy(grid, params, depth, dense_limit=dense_limit)


def dc_cycle(hier, x, b):
    return hier.dc_cycle(x, b)


def h_cycle(hier, lvl, x, b, kind="V"):
    return hier.h_cycle(lvl, x, b, kind)
