"""Coupled relaxation for saddle-point systems: additive Vanka and inexact
Braess-Sarazin (IBSR).

Both relaxers act on a residual and return a correction, so one sweep is
``x + omega * M^{-1} (b - K x)``.  Vectors may carry extra columns (several
independent right-hand sides are relaxed at once).
"""

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

PATCH_RADIUS = 2  # half-h lattice steps: one pressure cell on each side


class RelaxationError(RuntimeError):
    pass


def _check_shapes(system, x, b):
    n = system.shape[0]
    if x.shape[0] != n or b.shape[0] != n or x.shape != b.shape:
        raise ValueError(f"shape mismatch: K is {n}x{n}, x {x.shape}, b {b.shape}")


def _free_position(system):
    pos = np.full(len(system.velocity), -1, dtype=np.int64)
    pos[system.vel_nodes] = np.arange(len(system.vel_nodes))
    return pos


def patch_indices(system):
    """Unknown indices of every Vanka patch, padded with -1.

    Patch ``i`` holds the free velocity DoFs on the closure of the pressure
    cells touching pressure node ``i`` (both components), then that single
    pressure DoF.  Patches follow the pressure mesh on every discretization.
    """
    pcoords = system.pressure.coords
    velocity = system.velocity
    free_pos = _free_position(system)
    m = len(system.vel_nodes)
    r = PATCH_RADIUS
    offs = [(a, b) for b in range(-r, r + 1) for a in range(-r, r + 1)]
    nodes = np.stack([velocity.node_at(pcoords[:, 0] + a, pcoords[:, 1] + b) for a, b in offs], axis=1)
    local = np.where(nodes >= 0, free_pos[np.maximum(nodes, 0)], -1)
    if velocity.period and velocity.period <= 2 * r:
        # tiny periodic grids: the patch box wraps onto itself
        for row in local:
            seen = set()
            for k, v in enumerate(row):
                if v >= 0 and v in seen:
                    row[k] = -1
                seen.add(v)
    ux = local
    uy = np.where(local >= 0, local + m, -1)
    p = (system.n_u + np.arange(system.n_p))[:, None]
    idx = np.concatenate([ux, uy, p], axis=1)
    # compact: valid entries first, keeping the lattice order
    order = np.argsort(idx < 0, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    width = int((idx >= 0).sum(axis=1).max())
    return idx[:, :width]


def _gather_submatrices(K, idx, chunk=2048):
    """Dense ``K[idx_i][:, idx_i]`` for every padded patch (identity on padding)."""
    K = sp.csr_matrix(K)
    K.sort_indices()
    n = K.shape[0]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(K.indptr))
    keys = rows * n + K.indices.astype(np.int64)
    npatch, w = idx.shape
    out = np.empty((npatch, w, w))
    eye = np.eye(w)
    for s in range(0, npatch, chunk):
        sl = idx[s:s + chunk]
        valid = sl >= 0
        ii = np.where(valid, sl, 0)
        q = ii[:, :, None] * n + ii[:, None, :]
        loc = np.searchsorted(keys, q)
        loc = np.minimum(loc, len(keys) - 1)
        hit = keys[loc] == q
        vals = np.where(hit, K.data[loc], 0.0)
        both = valid[:, :, None] & valid[:, None, :]
        vals = np.where(both, vals, 0.0)
        pad = ~valid
        vals = vals + (pad[:, :, None] & pad[:, None, :]) * eye
        out[s:s + chunk] = vals
    return out


class VankaPatchSet:
    """Additive Vanka relaxation with one saddle-point patch per pressure DoF.

    Patch matrices that coincide (to 12 significant digits) share a single
    factorization; on structured meshes this collapses all interior patches
    onto one dense inverse.
    """

    def __init__(self, system, dedupe=True, factor=True):
        self.n = system.shape[0]
        self.idx = patch_indices(system)
        valid = self.idx >= 0
        counts = np.bincount(self.idx[valid], minlength=self.n)
        if np.any(counts == 0):
            raise RelaxationError("some DoF belongs to no Vanka patch")
        self.multiplicity = counts
        self.weights = np.where(valid, 1.0 / counts[np.maximum(self.idx, 0)], 0.0)
        if factor:
            self._factor(system.K, dedupe)
        flat = self.idx.ravel()
        keep = flat >= 0
        cols = np.arange(flat.size)[keep]
        self.scatter = sp.csr_matrix((self.weights.ravel()[keep], (flat[keep], cols)),
                                     shape=(self.n, flat.size))
        self._gather = np.maximum(self.idx, 0)
        self._valid = valid

    def _factor(self, K, dedupe, chunk=2048):
        scale = np.abs(K.data).max()
        npatch, w = self.idx.shape
        groups = {}
        label = np.empty(npatch, dtype=np.int64)
        reps = []
        # gather patch matrices chunk by chunk, keeping only distinct ones
        for s in range(0, npatch, chunk):
            mats = _gather_submatrices(K, self.idx[s:s + chunk])
            keyed = np.round(mats / scale, 12) + 0.0
            for i, m in enumerate(keyed):
                key = m.tobytes() if dedupe else s + i
                g = groups.get(key)
                if g is None:
                    g = groups[key] = len(reps)
                    reps.append((s + i, mats[i]))
                label[s + i] = g
        inv = np.empty((len(reps), w, w))
        for g, (r, m) in enumerate(reps):
            lu, piv = sla.lu_factor(m, check_finite=False)
            if np.any(np.abs(np.diag(lu)) <= 1e-14 * scale):
                raise RelaxationError(f"singular Vanka patch at pressure DoF {r}")
            inv[g] = sla.lu_solve((lu, piv), np.eye(w), check_finite=False)
        self.label = label
        self.inverses = inv
        order = np.argsort(label, kind="stable")
        bounds = np.searchsorted(label[order], np.arange(len(reps) + 1))
        self.members = [order[bounds[g]:bounds[g + 1]] for g in range(len(reps))]
        log.debug("Vanka: %d patches, %d distinct patch matrices", npatch, len(reps))

    @property
    def n_patches(self):
        return len(self.idx)

    def patch_matrices(self, K):
        return _gather_submatrices(K, self.idx)

    def solve_patches(self, r):
        """``sum_i V_i^T W_i (V_i K V_i^T)^{-1} V_i r``."""
        single = r.ndim == 1
        R = r[:, None] if single else r
        k = R.shape[1]
        Rp = R[self._gather] * self._valid[:, :, None]
        Y = np.empty_like(Rp)
        w = self.idx.shape[1]
        for g, mem in enumerate(self.members):
            if len(mem) == 1:
                Y[mem[0]] = self.inverses[g] @ Rp[mem[0]]
                continue
            blk = Rp[mem].transpose(1, 0, 2).reshape(w, -1)
            Y[mem] = (self.inverses[g] @ blk).reshape(w, len(mem), k).transpose(1, 0, 2)
        out = self.scatter @ Y.reshape(-1, k)
        return out[:, 0] if single else out

    def apply(self, K, x, b, omega):
        return x + omega * self.solve_patches(b - K @ x)

    def weight_sum(self):
        """Assembled ``sum_i V_i^T W_i V_i`` (sparse, should be the identity)."""
        flat = self.idx.ravel()
        keep = flat >= 0
        return sp.csr_matrix((self.weights.ravel()[keep], (flat[keep], flat[keep])), shape=(self.n, self.n))

    def as_matrix(self):
        """Dense ``M_V^{-1}`` (small problems only)."""
        return self.solve_patches(np.eye(self.n))

    def nbytes(self):
        return self.inverses.nbytes + self.idx.nbytes + self.weights.nbytes + self.scatter.data.nbytes


def build_vanka(system, dedupe=True, factor=True):
    """Vanka patches, weights and patch factorizations.

    ``factor=False`` stops after the index sets and weights (tiny periodic
    grids, where a patch wraps onto the whole velocity space and is singular).
    """
    return VankaPatchSet(system, dedupe=dedupe, factor=factor)


def apply_vanka(patches, system, x, b, omega):
    _check_shapes(system, x, b)
    return patches.apply(system.K, x, b, omega)


@dataclass
class BsrSetup:
    """Inexact Braess-Sarazin data: diagonal velocity approximation, the
    assembled Schur approximation ``S = B diag(A)^{-1} B^T`` and parameters."""

    Adiag: np.ndarray
    S: sp.csr_matrix
    Sdiag: np.ndarray
    alpha: float
    beta: float
    exact: bool = False
    _Alu: object = None
    _Spinv: np.ndarray = None

    def correction(self, system, r):
        ru, rp = r[:system.n_u], r[system.n_u:]
        B = system.B
        if self.exact:
            Ainv_ru = self._Alu.solve(ru)
            dp = self._Spinv @ (B @ Ainv_ru - self.alpha * rp)
            du = self._Alu.solve(ru - B.T @ dp) / self.alpha
            return np.concatenate([du, dp])
        D = self.Adiag if ru.ndim == 1 else self.Adiag[:, None]
        Ds = self.Sdiag if rp.ndim == 1 else self.Sdiag[:, None]
        dp = self.beta * (B @ (ru / D) - self.alpha * rp) / Ds
        du = (ru - B.T @ dp) / (self.alpha * D)
        return np.concatenate([du, dp])


def build_bsr(system, alpha, beta, exact=False):
    """IBSR setup.  ``exact=True`` (tests only) uses ``A`` itself and an exact
    (pseudo-)inverse of ``B A^{-1} B^T``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    d = system.A.diagonal()
    if np.any(d <= 0):
        raise RelaxationError("nonpositive diagonal in A: boundary conditions not applied?")
    S = (system.B @ sp.diags(1.0 / d) @ system.B.T).tocsr()
    S.sort_indices()
    setup = BsrSetup(d, S, S.diagonal(), float(alpha), float(beta), exact)
    if exact:
        setup._Alu = spla.splu(system.A.tocsc())
        Bd = system.B.toarray()
        setup._Spinv = np.linalg.pinv(Bd @ setup._Alu.solve(Bd.T), rcond=1e-12)
    return setup


def apply_bsr(setup, system, x, b, omega):
    _check_shapes(system, x, b)
    return x + omega * setup.correction(system, b - system.K @ x)


class Relaxer:
    """Uniform relaxation handle used by the multigrid cycles."""

    def __init__(self, system, kind, omega, alpha=None, beta=None):
        self.system = system
        self.kind = kind
        self.omega = float(omega)
        if kind == "vanka":
            self.impl = build_vanka(system)
        elif kind == "bsr":
            if alpha is None or beta is None:
                raise ValueError("IBSR needs alpha and beta")
            self.impl = build_bsr(system, alpha, beta)
        else:
            raise ValueError(f"unknown relaxer {kind!r}")

    def correction(self, r):
        if self.kind == "vanka":
            return self.impl.solve_patches(r)
        return self.impl.correction(self.system, r)

    def __call__(self, x, b):
        if self.omega == 0.0:
            return x
        return x + self.omega * self.correction(b - self.system.K @ x)

    def inverse_matrix(self):
        """Dense ``M^{-1}`` (small problems only)."""
        return self.correction(np.eye(self.system.shape[0]))
