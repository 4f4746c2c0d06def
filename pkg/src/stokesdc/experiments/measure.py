"""Convergence-factor measurement: many stationary runs from random initial
guesses with a zero right-hand side, and a log-linear fit of the tails."""

from dataclasses import dataclass, field
import logging

import numpy as np

from ..krylov import stationary_solve, fgmres
from ..multigrid import MgHierarchy

log = logging.getLogger(__name__)


@dataclass
class RhoEstimate:
    """Pooled factor ``rho = exp(xi1)`` from ``ln r = xi0 + xi1 j`` over all
    runs' tails, plus per-run fits and iteration counts."""

    rho: float
    xi0: float
    xi1: float
    fit_residual: float
    iterations: np.ndarray
    per_run: np.ndarray
    diverged: np.ndarray
    seed: int
    below_floor: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def m(self):
        """Median iteration count over the runs."""
        return int(np.median(self.iterations))

    @property
    def rho_mean(self):
        return float(np.nanmean(self.per_run))


GUESS_RANGE = (0.0, 1.0)


def initial_guesses(n, num_runs, seed, start=0, stop=None, low=GUESS_RANGE[0], high=GUESS_RANGE[1]):
    """Columns ``start:stop`` of the ``num_runs`` seeded initial guesses.

    Entries are uniform on ``[low, high)``.  Each run draws from its own
    counter-based stream (Philox keyed by a spawned seed sequence), so a
    run's guess does not depend on batching.
    """
    stop = num_runs if stop is None else stop
    children = np.random.SeedSequence(seed).spawn(num_runs)[start:stop]
    return np.column_stack([np.random.Generator(np.random.Philox(c)).uniform(low, high, n)
                            for c in children])


def fit_tails(histories, tail=10):
    """Pooled and per-run least-squares fits of the last ``min(m_s, tail)``
    residual norms of each run."""
    js, logs, per_run = [], [], []
    for h in histories:
        h = np.asarray(h, dtype=float)
        m = len(h) - 1
        k = min(m, tail)
        seg = h[len(h) - k:] if k else h[:0]
        seg = seg[seg > 0]
        j = np.arange(len(seg), dtype=float)
        if len(seg) >= 2:
            per_run.append(np.exp(np.polyfit(j, np.log(seg), 1)[0]))
            js.append(j)
            logs.append(np.log(seg))
        else:
            per_run.append(np.nan)
    if not js:
        return np.nan, np.nan, np.nan, np.array(per_run)
    j = np.concatenate(js)
    y = np.concatenate(logs)
    A = np.column_stack([np.ones_like(j), j])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid, np.array(per_run)


def measure_rho(hier, num_runs=100, tail=10, seed=20210, tol=1e-10, max_iter=100, rule="relative",
                batch=50, guess_range=GUESS_RANGE):
    """Measured convergence factor of the stationary defect-correction cycle.

    Parameters
    ----------
    hier : MgHierarchy
    num_runs, tail : int
        Number of random starts and residuals per run entering the fit.
    seed : int
        Root seed; run ``s`` uses the ``s``-th spawned stream.
    tol, max_iter, rule
        Stopping criterion of each run.
    guess_range : (float, float)
        Initial guesses are uniform on this interval with ``b = 0``.

    Returns
    -------
    RhoEstimate
    """
    sys0 = hier.systems[0]
    n = sys0.shape[0]
    Q = sys0.nullspace if sys0.enclosed else None
    histories, its, div = [], [], []
    for s in range(0, num_runs, batch):
        X0 = initial_guesses(n, num_runs, seed, s, min(num_runs, s + batch), *guess_range)
        _, reports = stationary_solve(hier.dc_cycle, sys0.K, np.zeros_like(X0), X0, tol=tol,
                                      max_iter=max_iter, rule=rule, nullspace=Q)
        histories += [r.history for r in reports]
        its += [r.iterations for r in reports]
        div += [r.diverged for r in reports]
    xi0, xi1, resid, per_run = fit_tails(histories, tail)
    floor = not np.isfinite(xi1)
    rho = float(np.exp(xi1)) if not floor else float("nan")
    if np.any(div):
        log.warning("%d of %d runs diverged", int(np.sum(div)), num_runs)
    return RhoEstimate(rho, xi0, xi1, resid, np.array(its), per_run, np.array(div), seed, floor,
                       extra={"histories": histories})


def fgmres_iterations(hier, num_runs=10, seed=20210, tol=1e-10, max_iter=200, rule="relative",
                      guess_range=GUESS_RANGE):
    """FGMRES iteration counts from random initial guesses with ``b = 0``."""
    sys0 = hier.systems[0]
    n = sys0.shape[0]
    Q = sys0.nullspace if sys0.enclosed else None
    X0 = initial_guesses(n, num_runs, seed, 0, None, *guess_range)
    its = []
    for k in range(num_runs):
        _, rep = fgmres(sys0.K, hier.precondition, np.zeros(n), X0[:, k], tol=tol,
                        max_iter=max_iter, rule=rule, nullspace=Q)
        its.append(rep.iterations)
    return np.array(its)


def build_for(problem, cycle):
    return MgHierarchy(problem.grid(), cycle, problem.depth)
