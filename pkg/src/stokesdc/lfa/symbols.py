"""Block symbols of translation-invariant operators.

Every DoF type lives on a copy of the h-lattice, so an operator between
``m`` input and ``k`` output types has a ``k x m`` matrix-valued symbol.
Positions are in half-h lattice units and a Fourier mode of frequency
``theta`` takes the value ``exp(i theta . x / 2)`` at position ``x``.
"""

import numpy as np
import scipy.sparse as sp

from ..assembly import TYPE_OFFSETS, N_TYPES

# harmonic offsets xi: theta^xi = theta + pi * xi
HARMONICS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
N_HARMONICS = 4


class LeakageError(ValueError):
    """Operator is not translation-invariant on the sampled grid."""


class BlockSymbol:
    """Symbol ``theta -> sum_k s_k exp(i theta . k / unit)`` of a stencil set.

    Evaluation is vectorized: ``sym(thetas)`` with ``thetas`` of shape
    ``(N, 2)`` returns an ``(N, rows, cols)`` complex array.
    """

    def __init__(self, stencils, name="", h=None):
        self.stencils = stencils
        self.name = name
        self.h = h
        self.shape = (stencils.n_row_types, stencils.n_col_types)
        rt, ct, dx, dy, val = stencils.as_arrays()
        self._k = np.column_stack([dx, dy]) / stencils.unit
        self._val = val
        flat = rt * self.shape[1] + ct
        self._scatter = sp.csr_matrix((np.ones(len(flat)), (flat, np.arange(len(flat)))),
                                      shape=(self.shape[0] * self.shape[1], len(flat)))

    def __call__(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        phase = np.exp(1j * theta @ self._k.T) * self._val
        out = (self._scatter @ phase.T).T
        return out.reshape(len(theta), *self.shape)

    def __repr__(self):
        return f"BlockSymbol({self.name!r}, shape={self.shape})"


def stencil_to_symbol(stencils, name="", h=None):
    return BlockSymbol(stencils, name, h)


def harmonic_thetas(theta):
    """``(N, 4, 2)`` harmonic frequencies ``theta + pi * xi``."""
    theta = np.atleast_2d(theta)
    return theta[:, None, :] + np.pi * HARMONICS[None]


def lift(symbol, theta):
    """Block-diagonal harmonic form ``diag(S(theta^00), ..., S(theta^11))``.

    Rows and columns are ordered harmonic-major: index ``xi * k + t``.
    """
    theta = np.atleast_2d(theta)
    N = len(theta)
    vals = symbol(harmonic_thetas(theta).reshape(-1, 2)).reshape(N, N_HARMONICS, *symbol.shape)
    r, c = symbol.shape
    out = np.zeros((N, N_HARMONICS * r, N_HARMONICS * c), dtype=complex)
    for x in range(N_HARMONICS):
        out[:, x * r:(x + 1) * r, x * c:(x + 1) * c] = vals[:, x]
    return out


def lift_blocks(blocks):
    """Block-diagonal harmonic form from per-harmonic arrays ``(N, 4, r, c)``."""
    N, H, r, c = blocks.shape
    out = np.zeros((N, H * r, H * c), dtype=blocks.dtype)
    for x in range(H):
        out[:, x * r:(x + 1) * r, x * c:(x + 1) * c] = blocks[:, x]
    return out


def parity_class(pos, typ):
    """Class ``4 * type + qx + 2 qy`` of fine DoFs, ``q`` the parity of the
    h-lattice index within the 2h period."""
    q = ((pos - TYPE_OFFSETS[typ]) // 2) % 2
    return 4 * typ + q[:, 0] + 2 * q[:, 1]


def harmonic_transform(n_types=N_TYPES):
    """``T[(t, q), (xi, t)] = exp(i pi xi . (off_t / 2 + q))``.

    Maps harmonic coefficients (harmonic-major) to the smooth envelope of
    each parity class, so interpolation symbols on the harmonic space are
    ``T^{-1} P_hat`` and restriction symbols ``R_hat T``.
    """
    T = np.zeros((4 * n_types, 4 * n_types), dtype=complex)
    for t in range(n_types):
        for qi in range(4):
            q = np.array([qi % 2, qi // 2])
            for x, xi in enumerate(HARMONICS):
                T[4 * t + qi, x * n_types + t] = np.exp(1j * np.pi * xi @ (TYPE_OFFSETS[t] / 2 + q))
    return T


def grid_frequencies(n):
    """The ``n^2`` frequencies ``2 pi k / n`` resolved by a periodic n x n grid."""
    k = 2 * np.pi * np.arange(n) / n
    k = np.where(k >= 3 * np.pi / 2, k - 2 * np.pi, k)
    tx, ty = np.meshgrid(k, k, indexing="ij")
    return np.column_stack([tx.ravel(), ty.ravel()])


def fourier_vectors(pos, typ, n_types, theta):
    """Per-type Fourier vectors ``(ndof, n_types)`` at one frequency."""
    v = np.zeros((len(pos), n_types), dtype=complex)
    v[np.arange(len(pos)), typ] = np.exp(0.5j * pos @ theta)
    return v


def extract_symbol_numeric(op, pos_in, typ_in, pos_out=None, typ_out=None, n_in=N_TYPES,
                           n_out=None, thetas=None, n=None, tol=1e-10):
    """Read an operator's symbol by applying it to Fourier vectors.

    Parameters
    ----------
    op : matrix or callable
        Operator acting on (columns of) vectors laid out by ``pos_in``/``typ_in``.
    thetas : ndarray, optional
        Frequencies; defaults to all grid frequencies of the periodic ``n x n`` grid.

    Returns
    -------
    thetas : ndarray, shape (N, 2)
    symbols : ndarray, shape (N, n_out, n_in)

    Raises
    ------
    LeakageError
        If the image of a Fourier vector leaves the span of the output
        Fourier vectors at the same frequency by more than ``tol``.
    """
    apply = op if callable(op) else (lambda v: op @ v)
    if pos_out is None:
        pos_out, typ_out = pos_in, typ_in
    n_out = n_out or n_in
    if thetas is None:
        thetas = grid_frequencies(n)
    out = np.empty((len(thetas), n_out, n_in), dtype=complex)
    for k, th in enumerate(thetas):
        vin = fourier_vectors(pos_in, typ_in, n_in, th)
        vout = fourier_vectors(pos_out, typ_out, n_out, th)
        img = apply(vin)
        norms = np.maximum(np.sum(np.abs(vout) ** 2, axis=0), 1)
        S = (vout.conj().T @ img) / norms[:, None]
        leak = np.abs(img - vout @ S).max() if img.size else 0.0
        if leak > tol * max(1.0, np.abs(img).max()):
            raise LeakageError(f"operator not translation-invariant (leakage {leak:.2e} at theta={th})")
        out[k] = S
    return thetas, out
