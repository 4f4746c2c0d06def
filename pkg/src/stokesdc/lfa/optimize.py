"""Multi-start derivative-free minimization of the predicted convergence factor."""

from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy.optimize import minimize

from ..multigrid import CycleParams
from .stokes import DefectCorrectionLFA
from .twogrid import sample_low

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = {"tau": (0.02, 1.98), "omega0": (0.02, 2.0), "omega1": (0.02, 2.0),
                  "alpha0": (0.1, 2.0), "beta0": (0.1, 2.0), "alpha1": (0.1, 2.0), "beta1": (0.1, 2.0)}


@dataclass
class OptimizeResult:
    params: CycleParams
    rho: float
    starts: int
    evaluations: int
    improved: bool
    history: list


def free_parameters(base):
    """Parameters that influence the cycle: zero damping switches a level's
    relaxation off and keeps it fixed."""
    names = ["tau"]
    for lvl in (0, 1):
        if base.omega(lvl) == 0:
            continue
        if lvl == 0 and base.nu1 + base.nu2 == 0:
            continue
        names.append(f"omega{lvl}")
        if base.relaxer == "bsr":
            names += [f"alpha{lvl}", f"beta{lvl}"]
    return names


def multistart_minimize(f, lo, hi, starts=8, seed=0, x0=None, tol=1e-3, maxiter=400, box=(0.3, 1.5)):
    """Bounded Nelder-Mead from ``starts`` points.

    The first start is ``x0`` (when given); the rest are drawn uniformly
    from ``box`` intersected with the bounds, where the optima of damping
    parameters usually lie.  Returns ``(results, improved)`` with
    ``results`` a list of ``(f_min, x_min)`` sorted by value and
    ``improved`` False when no start improved on its initial value.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    c_lo, c_hi = np.maximum(lo, box[0]), np.minimum(hi, box[1])
    c_lo, c_hi = np.minimum(c_lo, c_hi), np.maximum(c_lo, c_hi)
    x0s = [] if x0 is None else [np.clip(np.asarray(x0, dtype=float), lo, hi)]
    x0s += [c_lo + rng.random(len(lo)) * (c_hi - c_lo) for _ in range(starts - len(x0s))]
    results = []
    improved = False
    for x in x0s:
        f0 = f(x)
        res = minimize(f, x, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"xatol": tol, "fatol": tol, "maxiter": maxiter})
        improved |= res.fun < f0 - tol
        results.append((float(res.fun), np.clip(res.x, lo, hi)))
        log.debug("start %s -> %.4f", np.round(x, 3), res.fun)
    results.sort(key=lambda r: r[0])
    return results, improved


def optimize_params(base, names=None, bounds=None, starts=8, seed=0, screen_resolution=8,
                    search_resolution=16, final_resolution=32, polish=2, maxiter=400, tol=1e-3, lfa=None):
    """Minimize the predicted factor over ``names``.

    Every one of the ``starts`` seeded points (the first is ``base`` itself)
    runs a bounded Nelder-Mead search on a coarse ``screen_resolution``
    frequency sample; the ``polish`` best are refined on the
    ``search_resolution`` sample and the winner, rounded to four decimals,
    is re-evaluated at ``final_resolution``.  ``improved`` is False when no
    start improved on its initial value.
    """
    lfa = lfa or DefectCorrectionLFA()
    names = names or free_parameters(base)
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    lo = np.array([bounds[k][0] for k in names])
    hi = np.array([bounds[k][1] for k in names])
    evals = 0

    def params_of(v):
        return replace(base, **dict(zip(names, map(float, np.clip(v, lo, hi)))))

    def objective_on(thetas):
        def f(v):
            nonlocal evals
            evals += 1
            try:
                r = lfa.predict(params_of(v), thetas=thetas).rho
            except ValueError:
                return 10.0
            return r if np.isfinite(r) else 10.0
        return f

    x0 = [getattr(base, k) or 1.0 for k in names]
    screen = objective_on(sample_low(screen_resolution, octant=True))
    results, improved = multistart_minimize(screen, lo, hi, starts, seed, x0, tol, maxiter)

    fine = objective_on(sample_low(search_resolution, octant=True))
    polished = []
    for _, x in results[:max(polish, 1)]:
        polished += multistart_minimize(fine, lo, hi, 1, seed, x, tol, maxiter)[0]
    polished.sort(key=lambda r: r[0])
    candidates = [params_of(np.round(x, 4)) for _, x in polished] + [base]
    finals = sorted((lfa.predict(p, final_resolution).rho, i) for i, p in enumerate(candidates))
    rho, k = finals[0]
    if not improved:
        log.warning("no start improved on its initial point")
    return OptimizeResult(candidates[k], float(rho), starts, evals, improved, [r[0] for r in results])
