"""Symbols of the Stokes defect-correction method.

All component stencils are read off matrices assembled on a small periodic
grid: the Q2/Q1 and Q1isoQ2/Q1 operators, the Galerkin coarse operator,
bilinear interpolation and the explicit Vanka inverse.  IBSR symbols are
composed from the operator blocks, since its inverse depends on
``(alpha, beta)``.
"""

from functools import lru_cache
import logging

import numpy as np
import scipy.sparse as sp

from .. import assembly, mesh
from ..assembly import N_TYPES, PRESSURE_TYPE, stencils_from_matrix
from ..multigrid import galerkin_system
from ..relaxation import build_vanka
from .symbols import (BlockSymbol, N_HARMONICS, harmonic_thetas, harmonic_transform, lift_blocks,
                      parity_class)
from .twogrid import (coarse_correction_symbol, dc_symbol, matrix_power, relaxation_symbol, rho_hat,
                      two_grid_symbol)

log = logging.getLogger(__name__)

N_CLASSES = 4 * N_TYPES
COND_LIMIT = 1e12


def _sparse_dense(M, rtol=1e-13):
    M = np.where(np.abs(M) > rtol * np.abs(M).max(), M, 0.0)
    return sp.csr_matrix(M)


def _square_symbol(M, system, name):
    pos, typ = system.layout
    st = stencils_from_matrix(M, pos, typ, pos, typ, system.period, N_TYPES, N_TYPES)
    return BlockSymbol(st, name, float(system.grid.h))


class StokesSymbols:
    """Component symbols for the two-level analysis, built once per grid size."""

    def __init__(self, n=8):
        if n % 2 or n < 4:
            raise ValueError("symbol extraction needs an even periodic grid with n >= 4")
        grid, spaces = mesh.build_unit_square(n, "periodic")
        self.n = n
        self.sys0 = assembly.assemble(grid, spaces, "q2q1")
        self.sys1 = assembly.assemble(grid, spaces, "q1isoq2")
        self.sys2, P = galerkin_system(self.sys1, grid.coarsen())

        self.K0 = _square_symbol(self.sys0.K, self.sys0, "K0")
        self.K1 = _square_symbol(self.sys1.K, self.sys1, "K1")
        # coarse operator with offsets in fine lattice units
        pos2, typ2 = self.sys2.layout
        period = 2 * self.sys2.period
        st = stencils_from_matrix(self.sys2.K, 2 * pos2, typ2, 2 * pos2, typ2, period, N_TYPES, N_TYPES)
        self.K2 = BlockSymbol(st, "K2")

        pos1, typ1 = self.sys1.layout
        cls = parity_class(pos1, typ1)
        stP = stencils_from_matrix(P, pos1, cls, 2 * pos2, typ2, self.sys1.period, N_CLASSES, N_TYPES)
        stR = stencils_from_matrix(P.T.tocsr(), 2 * pos2, typ2, pos1, cls, self.sys1.period, N_TYPES, N_CLASSES)
        self.P_hat = BlockSymbol(stP, "P")
        self.R_hat = BlockSymbol(stR, "R")
        self.T = harmonic_transform()
        self.Tinv = np.linalg.inv(self.T)

        self.vanka = {}
        for lvl, sysl in ((0, self.sys0), (1, self.sys1)):
            Minv = build_vanka(sysl).as_matrix()
            self.vanka[lvl] = _square_symbol(_sparse_dense(Minv), sysl, f"Vanka{lvl}")

        self.diag = {}
        for lvl, sysl in ((0, self.sys0), (1, self.sys1)):
            _, typ = sysl.layout
            d = sysl.A.diagonal()
            per_type = np.array([d[typ[:sysl.n_u] == t][0] for t in range(PRESSURE_TYPE)])
            S = sysl.B @ sp.diags(1.0 / d) @ sysl.B.T
            self.diag[lvl] = (per_type, float(S.diagonal()[0]))

    # evaluation ---------------------------------------------------------

    def evaluate(self, thetas):
        """All component symbols at ``thetas`` (lifted to the harmonic space)."""
        N = len(thetas)
        ht = harmonic_thetas(thetas).reshape(-1, 2)
        raw = {name: sym(ht).reshape(N, N_HARMONICS, N_TYPES, N_TYPES)
               for name, sym in (("K0", self.K0), ("K1", self.K1),
                                 ("V0", self.vanka[0]), ("V1", self.vanka[1]))}
        out = {"raw": raw}
        for name, blocks in raw.items():
            out[name] = lift_blocks(blocks)
        out["K2"] = self.K2(thetas)
        out["P"] = self.Tinv @ self.P_hat(thetas)
        out["R"] = self.R_hat(thetas) @ self.T
        return out

    def bsr_inverse(self, raw_K, level, alpha, beta):
        """IBSR ``M^{-1}`` per harmonic, composed from the operator blocks."""
        d, s = self.diag[level]
        Bt = raw_K[..., :8, 8:]
        Bb = raw_K[..., 8:, :8]
        Dinv = np.diag(1.0 / d)
        M = np.zeros_like(raw_K)
        c = beta / s
        M[..., :8, :8] = (Dinv - c * (Dinv @ Bt @ Bb @ Dinv)) / alpha
        M[..., :8, 8:] = c * (Dinv @ Bt)
        M[..., 8:, :8] = c * (Bb @ Dinv)
        M[..., 8:, 8:] = -c * alpha
        return M


@lru_cache(maxsize=4)
def stokes_symbols(n=8):
    return StokesSymbols(n)


class DefectCorrectionLFA:
    """Predicts convergence of the two-level defect-correction cycle.

    The low-order correction uses ``gamma`` two-grid cycles on K1 with an
    exact coarse solve (the paper's two-grid setting).
    """

    def __init__(self, n=8, cond_limit=COND_LIMIT):
        self.sym = stokes_symbols(n)
        self.cond_limit = cond_limit
        self._cache = {}

    def components(self, thetas):
        key = thetas.tobytes()
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            comp = self.sym.evaluate(thetas)
            c1 = np.linalg.cond(comp["K1"])
            c2 = np.linalg.cond(comp["K2"])
            comp["ok"] = (c1 < self.cond_limit) & (c2 < self.cond_limit)
            # parameter-independent products, reused across predictions
            comp["K1invK0"] = np.linalg.solve(comp["K1"], comp["K0"])
            comp["CGC"] = coarse_correction_symbol(comp["K1"], comp["K2"], comp["P"], comp["R"])
            for lvl in (0, 1):
                comp[f"VK{lvl}"] = comp[f"V{lvl}"] @ comp[f"K{lvl}"]
            self._cache[key] = comp
        return self._cache[key]

    def relaxation(self, comp, level, params):
        K = comp[f"K{level}"]
        omega = params.omega(level)
        I = np.eye(K.shape[-1], dtype=complex)
        if omega == 0:
            return np.broadcast_to(I, K.shape)
        if params.relaxer == "vanka":
            return I - omega * comp[f"VK{level}"]
        alpha, beta = params.bsr_params(level)
        Minv = lift_blocks(self.sym.bsr_inverse(comp["raw"][f"K{level}"], level, alpha, beta))
        return relaxation_symbol(Minv, K, omega)

    def h_two_grid(self, comp, params):
        """Two-grid symbol of one (1,1) cycle on K1."""
        S1 = self.relaxation(comp, 1, params)
        return S1 @ comp["CGC"] @ S1

    def error_symbol(self, thetas, params):
        """Defect-correction error symbol at ``thetas`` and the validity mask."""
        comp = self.components(thetas)
        p = params
        S0 = self.relaxation(comp, 0, p)
        I = np.eye(S0.shape[-1], dtype=complex)
        if p.gamma > 0:
            low = (I - matrix_power(self.h_two_grid(comp, p), p.gamma)) @ comp["K1invK0"]
        else:
            low = np.zeros_like(S0)
        E = matrix_power(S0, p.nu2) @ (I - p.tau * low) @ matrix_power(S0, p.nu1)
        return E, comp["ok"]

    def error_symbol_reference(self, thetas, params):
        """Same symbol built from the generic two-grid and defect-correction
        formulas without cached products."""
        comp = self.components(thetas)
        S0 = self.relaxation(comp, 0, params)
        S1 = self.relaxation(comp, 1, params)
        G1 = two_grid_symbol(comp["K1"], comp["K2"], comp["P"], comp["R"], S1, S1, 1, 1)
        E = dc_symbol(comp["K0"], comp["K1"], G1, S0, params.nu1, params.nu2, params.gamma, params.tau)
        return E, comp["ok"]

    def predict(self, params, resolution=32, thetas=None, symmetric=True):
        return rho_hat(self.error_symbol, params, resolution, thetas, symmetric)


def predict_rho(params, resolution=32, n=8):
    return DefectCorrectionLFA(n).predict(params, resolution)
