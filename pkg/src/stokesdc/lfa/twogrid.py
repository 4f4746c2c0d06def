"""Two-grid and defect-correction symbols on the harmonic space, and the
predicted convergence factor."""

from dataclasses import dataclass

import numpy as np


def matrix_power(M, k):
    """Batched ``M^k`` for ``(N, n, n)`` arrays (``k = 0`` gives the identity)."""
    n = M.shape[-1]
    out = np.broadcast_to(np.eye(n, dtype=M.dtype), M.shape).copy()
    for _ in range(k):
        out = out @ M
    return out


def _identity_like(M):
    return np.broadcast_to(np.eye(M.shape[-1], dtype=complex), M.shape)


def relaxation_symbol(Minv, K, omega):
    """``I - omega M^{-1} K``."""
    return _identity_like(K) - omega * (Minv @ K)


def coarse_correction_symbol(K, Kc, P, R):
    """``I - P Kc^{-1} R K``."""
    return _identity_like(K) - P @ np.linalg.solve(Kc, R @ K)


def two_grid_symbol(K, Kc, P, R, S_pre, S_post=None, nu1=1, nu2=1):
    """``S_post^nu2 (I - P Kc^{-1} R K) S_pre^nu1`` on the harmonic space.

    ``K`` is the lifted fine symbol ``(N, 36, 36)``, ``Kc`` the coarse symbol
    at ``2 theta`` ``(N, 9, 9)``, ``P`` and ``R`` the transfer symbols
    ``(N, 36, 9)`` and ``(N, 9, 36)``.
    """
    S_post = S_pre if S_post is None else S_post
    cgc = coarse_correction_symbol(K, Kc, P, R)
    return matrix_power(S_post, nu2) @ cgc @ matrix_power(S_pre, nu1)


def dc_symbol(K0, K1, G1, S0, nu1, nu2, gamma, tau):
    """Defect-correction symbol ``S0^nu2 (I - tau (I - G1^gamma) K1^{-1} K0) S0^nu1``."""
    I = _identity_like(K0)
    low = (I - matrix_power(G1, gamma)) @ np.linalg.solve(K1, K0)
    return matrix_power(S0, nu2) @ (I - tau * low) @ matrix_power(S0, nu1)


def sample_low(resolution, half=False, octant=False):
    """``resolution^2`` points of ``[-pi/2, pi/2)^2`` offset by half a step
    (so ``theta = 0`` is never sampled).

    ``half`` keeps ``theta_1 > 0``; ``octant`` keeps ``0 < theta_2 <= theta_1``.
    """
    step = np.pi / resolution
    t = -np.pi / 2 + (np.arange(resolution) + 0.5) * step
    tx, ty = np.meshgrid(t, t, indexing="ij")
    th = np.column_stack([tx.ravel(), ty.ravel()])
    if octant:
        return th[(th[:, 1] > 0) & (th[:, 1] <= th[:, 0])]
    return th[th[:, 0] > 0] if half else th


def spectral_radii(E):
    return np.abs(np.linalg.eigvals(E)).max(axis=-1)


@dataclass
class RhoHat:
    rho: float
    theta: np.ndarray
    skipped: int
    radii: np.ndarray = None


def rho_hat(symbol_builder, params=None, resolution=32, thetas=None, symmetric=True):
    """Largest spectral radius of the error symbol over sampled frequencies.

    Symbols of real operators satisfy ``E(-theta) = conj(E(theta))``, and the
    square-grid operators and relaxers are also invariant under
    ``theta_2 -> -theta_2`` and ``theta_1 <-> theta_2``.  With
    ``symmetric=True`` only the octant ``0 < theta_2 <= theta_1`` of the
    (dihedrally symmetric) sample set is evaluated.

    ``symbol_builder(thetas, params)`` returns ``(E, ok)``: the ``(N, m, m)``
    error symbols and a mask of frequencies whose inverses were well
    conditioned.  Excluded frequencies are counted in ``skipped``.
    """
    if thetas is None:
        if resolution < 1:
            raise ValueError("resolution must be positive")
        thetas = sample_low(resolution, octant=symmetric)
    E, ok = symbol_builder(thetas, params)
    radii = np.full(len(thetas), np.nan)
    if np.any(ok):
        radii[ok] = spectral_radii(E[ok])
    if not np.any(ok):
        return RhoHat(np.nan, None, int(len(thetas)), radii)
    k = int(np.nanargmax(radii))
    return RhoHat(float(radii[k]), thetas[k], int(np.sum(~ok)), radii)
