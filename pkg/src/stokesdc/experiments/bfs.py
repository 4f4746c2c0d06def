"""Backward-facing step timing and iteration benchmark."""

import gc
import logging
import time

import numpy as np

from .. import assembly, mesh
from ..krylov import fgmres
from ..multigrid import CycleParams, MgHierarchy
from .config import table_cycles

log = logging.getLogger(__name__)

# rough peak footprint per unknown (matrices on all levels, Vanka index
# tables, Krylov bases and cycle temporaries)
BYTES_PER_DOF = 6000
DEFAULT_MEMORY_CAP = 3 * 2 ** 30

RELAXER_ROWS = {"bsr": "BS(1,1,1)", "vanka": "V(1,1,2)"}


class MemoryGuardError(MemoryError):
    pass


def estimate_bytes(refinement):
    N = 2 ** refinement
    return BYTES_PER_DOF * (27 * N * N + 20 * N + 3)


def fit_work_coefficient(dofs, iterations, times):
    """Least-squares ``c`` in ``t = c * DoFs * m``."""
    w = np.asarray(dofs, float) * np.asarray(iterations, float)
    t = np.asarray(times, float)
    return float(w @ t / (w @ w))


def bench_bfs(max_refinement=7, min_refinement=2, relaxers=("bsr", "vanka"), cycles=("V", "W"),
              memory_cap=None, tol=1e-10):
    """FGMRES on the step problem for every (refinement, relaxer, cycle).

    Returns ``{"rows": [...], "coefficient": {(relaxer, cycle): c}}`` where
    each row holds DoFs (all velocity and pressure nodes), free unknowns,
    levels, iterations and setup/solve wall times.
    """
    cap = DEFAULT_MEMORY_CAP if memory_cap is None else memory_cap
    params = table_cycles(2)
    rows = []
    for ref in range(min_refinement, max_refinement + 1):
        grid, spaces = mesh.build_step_domain(ref)
        dofs = mesh.count_dofs(spaces)
        est = estimate_bytes(ref)
        if est > cap:
            log.warning("refinement %d needs ~%.1f GB, above the %.1f GB cap; skipped", ref, est / 2**30, cap / 2**30)
            for rel in relaxers:
                for kind in cycles:
                    rows.append(dict(refinement=ref, dofs=dofs, unknowns=None, levels=ref, relaxer=rel,
                                     cycle=kind, m=None, setup_time=None, solve_time=None,
                                     status="skipped: memory cap"))
            continue
        sys0 = assembly.assemble(grid, spaces, "q2q1")
        sys1 = assembly.assemble(grid, spaces, "q1isoq2")
        for rel in relaxers:
            base = params[RELAXER_ROWS[rel]]
            t0 = time.perf_counter()
            hier = MgHierarchy(grid, base, ref, systems=[sys0, sys1])
            setup = time.perf_counter() - t0
            for kind in cycles:
                p = CycleParams.from_dict({**base.to_dict(), "cycle": kind})
                hier.set_params(p)
                _, rep = fgmres(sys0.K, hier.precondition, sys0.rhs, tol=tol)
                status = "ok" if rep.converged else "not converged"
                rows.append(dict(refinement=ref, dofs=dofs, unknowns=sys0.shape[0], levels=ref, relaxer=rel,
                                 cycle=kind, m=rep.iterations, setup_time=setup, solve_time=rep.wall_time,
                                 status=status))
                log.info("bfs ref=%d %s-%s: m=%d, %.2fs", ref, rel, kind, rep.iterations, rep.wall_time)
            del hier
            gc.collect()
    coef = {}
    for rel in relaxers:
        for kind in cycles:
            sel = [r for r in rows if r["relaxer"] == rel and r["cycle"] == kind and r["status"] == "ok"]
            if sel:
                coef[(rel, kind)] = fit_work_coefficient([r["dofs"] for r in sel], [r["m"] for r in sel],
                                                         [r["solve_time"] for r in sel])
    for r in rows:
        if r["status"] == "ok":
            r["time_per_work"] = r["solve_time"] / (r["dofs"] * r["m"])
    return {"rows": rows, "coefficient": coef}
