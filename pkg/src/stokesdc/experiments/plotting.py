"""PNG figures written next to the CSV outputs."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sweeps import as_grid  # noqa: E402


def plot_sensitivity(rows, path, title=None):
    w0, w1, Z = as_grid(rows)
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(w1, w0, np.clip(Z, 0, 1), shading="nearest", cmap="viridis", vmin=0, vmax=1)
    fig.colorbar(mesh, ax=ax, label=r"measured $\rho$")
    ax.set_xlabel(r"$\omega_1$")
    ax.set_ylabel(r"$\omega_0$")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_timing(rows, coefficients, path):
    """Solve time against DoFs on log-log axes with ``c * DoFs * m`` lines."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for (rel, kind), c in sorted(coefficients.items()):
        sel = [r for r in rows if r["relaxer"] == rel and r["cycle"] == kind and r["status"] == "ok"]
        d = np.array([r["dofs"] for r in sel], float)
        t = np.array([r["solve_time"] for r in sel])
        m = np.array([r["m"] for r in sel], float)
        line, = ax.loglog(d, t, "o-", label=f"{rel} {kind}-cycle")
        ax.loglog(d, c * d * m, "--", color=line.get_color(), alpha=0.6)
    ax.set_xlabel("DoFs")
    ax.set_ylabel("solve time [s]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
