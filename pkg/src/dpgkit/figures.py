"""Matplotlib rendering of the experiment reports.

Figures are written next to the delimited output of each CLI command: the
one-element solution comparison, the convergence log-log plot, and the
initial/midway/final mesh triptych of the adaptive run.  Rendering is
deterministic (fixed metadata, no timestamps).
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": "dpgkit"}

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.linewidth": 1.2,
    }
)


def save_ode1d_figure(samples, path):
    """Panel per variant: exact solution against u_h for each degree.

    ``samples`` maps variant -> {"x": array, "exact": array,
    "by_p": {p: u_h array}}.
    """
    variants = list(samples)
    fig, axes = plt.subplots(1, len(variants), figsize=(4.0 * len(variants), 3.2), squeeze=False)
    for ax, variant in zip(axes[0], variants):
        data = samples[variant]
        ax.plot(data["x"], data["exact"], "k-", label="exact")
        for p, uh in sorted(data["by_p"].items()):
            ax.plot(data["x"], uh, "--", label=f"p={p}")
        ax.set_title(variant)
        ax.set_xlabel("x")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def save_convergence_figure(rows, path, slope=None):
    """Log-log plot of the H1 error and estimator against h/sqrt(2)."""
    h = np.array([row["h_over_sqrt2"] for row in rows])
    err = np.array([row["h1_error"] for row in rows])
    eta = np.array([row["estimator"] for row in rows])
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    ax.loglog(h, err, "o-", label="H1 error")
    ax.loglog(h, eta, "s--", label="estimator")
    if slope is not None and len(h) > 1:
        ref = err[0] * (h / h[0]) ** round(slope)
        ax.loglog(h, ref, "k:", label=f"slope {round(slope)}")
    ax.set_xlabel(r"h / $\sqrt{2}$")
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def save_mesh_figure(labeled_meshes, path):
    """Triptych (or any short list) of meshes, e.g. initial/midway/final."""
    n = len(labeled_meshes)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for ax, (label, mesh) in zip(axes[0], labeled_meshes):
        ax.triplot(
            mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles, lw=0.5, color="tab:blue"
        )
        ax.set_title(f"{label} ({mesh.n_triangles} elements)", fontsize=8)
        ax.set_aspect("equal")
        ax.grid(False)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
