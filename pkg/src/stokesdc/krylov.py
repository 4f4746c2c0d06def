"""Flexible GMRES and the stationary multigrid driver."""

from dataclasses import dataclass, field
import logging
import time

import numpy as np

log = logging.getLogger(__name__)

STOPPING_RULES = ("relative", "absolute")


class KrylovBreakdown(RuntimeError):
    pass


@dataclass
class SolveReport:
    """Iteration count ``m``, residual history (length ``m + 1``) and status."""

    iterations: int
    history: np.ndarray
    converged: bool
    wall_time: float = 0.0
    diverged: bool = False
    breakdown: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def final_residual(self):
        return float(self.history[-1])


def _threshold(r0, tol, rule):
    if tol <= 0:
        raise ValueError("tol must be positive")
    if rule == "relative":
        return tol * r0
    if rule == "absolute":
        return tol
    raise ValueError(f"unknown stopping rule {rule!r}")


def _project(Q, v):
    if Q is None or Q.shape[1] == 0:
        return v
    return v - Q @ (Q.T @ v)


def _as_operator(op):
    return op if callable(op) else (lambda v: op @ v)


def fgmres(K, M, b, x0=None, tol=1e-10, max_iter=200, rule="relative", nullspace=None,
           keep_basis=False):
    """Right-preconditioned flexible GMRES without restarts.

    Parameters
    ----------
    K, M : matrix or callable
        Operator and preconditioner.  ``M`` may change between iterations;
        the preconditioned directions ``Z`` are stored explicitly.
    b : ndarray
        Right-hand side.
    tol, rule : float, {"relative", "absolute"}
        Stop once ``||b - K x|| <= tol * ||b - K x0||`` (relative) or
        ``<= tol`` (absolute).
    nullspace : ndarray, optional
        Orthonormal columns projected out of ``b`` and of every
        preconditioned direction (singular enclosed-flow systems).

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    Kop, Mop = _as_operator(K), _as_operator(M)
    t0 = time.perf_counter()
    b = _project(nullspace, np.asarray(b, dtype=float))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - Kop(x)
    beta = np.linalg.norm(r)
    stop = _threshold(beta, tol, rule)
    history = [beta]
    if beta == 0.0 or beta <= stop and rule == "absolute":
        return x, SolveReport(0, np.array(history), True, time.perf_counter() - t0)

    V = [r / beta]
    Z = []
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta
    breakdown = False
    j = -1
    for j in range(max_iter):
        z = _project(nullspace, Mop(V[j]))
        Z.append(z)
        w = Kop(z)
        # modified Gram-Schmidt followed by one reorthogonalization pass
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        for i in range(j + 1):
            c = V[i] @ w
            w -= c * V[i]
            H[i, j] += c
        hn = np.linalg.norm(w)
        H[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        d = np.hypot(H[j, j], H[j + 1, j])
        cs[j], sn[j] = H[j, j] / d, H[j + 1, j] / d
        H[j, j] = d
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        history.append(abs(g[j + 1]))
        if hn < 1e-14 * beta:
            breakdown = True
            break
        if abs(g[j + 1]) <= stop:
            break
        V.append(w / hn)
    m = j + 1
    y = np.linalg.solve(np.triu(H[:m, :m]), g[:m]) if m else np.zeros(0)
    for yi, z in zip(y, Z):
        x = x + yi * z
    true = np.linalg.norm(b - Kop(x))
    converged = true <= max(stop, 0) * (1 + 1e-6) or abs(g[m]) <= stop
    if breakdown and not converged:
        raise KrylovBreakdown(f"FGMRES breakdown after {m} iterations with residual {true:.3e}")
    report = SolveReport(m, np.array(history), bool(converged), time.perf_counter() - t0,
                         breakdown=breakdown, extra={"true_residual": true})
    if keep_basis:
        report.extra["V"] = np.array(V)
    log.debug("fgmres: %d iterations, residual %.3e", m, true)
    return x, report


def stationary_solve(cycle, K, b, x0=None, tol=1e-10, max_iter=100, rule="relative", nullspace=None,
                     stop_each=True):
    """Iterate ``x <- cycle(x, b)`` until the stopping rule or ``max_iter``.

    ``b`` and ``x0`` may carry several columns (independent runs); each
    column then stops on its own and a list of reports is returned.  Runs
    whose residual grows above ten times the initial one are flagged as
    diverged and kept going.
    """
    Kop = _as_operator(K)
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = b[:, None] if single else b
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    X = _project(nullspace, X)
    res = np.linalg.norm(_project(nullspace, B - Kop(X)), axis=0)
    stops = np.array([_threshold(r, tol, rule) for r in res])
    hist = [[r] for r in res]
    active = res > stops
    if rule == "relative":
        active &= res > 0
    diverged = np.zeros(len(res), dtype=bool)
    it = np.zeros(len(res), dtype=int)
    for _ in range(max_iter):
        cols = np.flatnonzero(active) if stop_each else np.arange(len(res))
        if not np.any(active):
            break
        Xa = cycle(X[:, cols], B[:, cols])
        Xa = _project(nullspace, Xa)
        X[:, cols] = Xa
        r = np.linalg.norm(_project(nullspace, B[:, cols] - Kop(Xa)), axis=0)
        for c, rc in zip(cols, r):
            if not active[c]:
                continue
            hist[c].append(rc)
            it[c] += 1
            if rc > 10 * hist[c][0]:
                diverged[c] = True
            if rc <= stops[c] or not np.isfinite(rc):
                active[c] = False
    wall = time.perf_counter() - t0
    reports = [SolveReport(int(it[c]), np.array(hist[c]), bool(hist[c][-1] <= stops[c]), wall,
                           diverged=bool(diverged[c])) for c in range(len(res))]
    if single:
        return X[:, 0], reports[0]
    return X, reports
