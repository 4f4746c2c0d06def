"""Sensitivity of the measured two-grid factor to the damping parameters."""

from dataclasses import replace
import logging

import numpy as np

from .. import mesh
from ..multigrid import MgHierarchy
from .measure import measure_rho

log = logging.getLogger(__name__)


def sensitivity_sweep(base, omega0_range=(0.02, 1.0), omega1_range=(0.02, 1.0), resolution=8, n=64,
                      depth=2, num_runs=10, seed=20210, omega0_values=None, omega1_values=None):
    """Measured factor on a ``resolution x resolution`` grid of ``(omega0, omega1)``.

    Explicit value lists override the ranges (useful for partial sweeps).
    Returns a list of ``{"omega0", "omega1", "rho", "m"}`` rows ordered with
    ``omega1`` fastest.
    """
    w0 = np.asarray(omega0_values) if omega0_values is not None else np.linspace(*omega0_range, resolution)
    w1 = np.asarray(omega1_values) if omega1_values is not None else np.linspace(*omega1_range, resolution)
    grid = mesh.build_unit_square(n, "dirichlet")[0]
    hier = MgHierarchy(grid, base, depth)
    rows = []
    for a in w0:
        for b in w1:
            p = replace(base, omega0=float(a), omega1=float(b))
            hier.set_params(p)
            est = measure_rho(hier, num_runs=num_runs, seed=seed)
            rows.append({"omega0": float(a), "omega1": float(b), "rho": est.rho, "m": est.m})
            log.info("omega0=%.3f omega1=%.3f rho=%.3f", a, b, est.rho)
    return rows


def as_grid(rows):
    """``(omega0 values, omega1 values, rho[i0, i1])`` from sweep rows."""
    w0 = np.unique([r["omega0"] for r in rows])
    w1 = np.unique([r["omega1"] for r in rows])
    Z = np.full((len(w0), len(w1)), np.nan)
    for r in rows:
        Z[np.searchsorted(w0, r["omega0"]), np.searchsorted(w1, r["omega1"])] = r["rho"]
    return w0, w1, Z
