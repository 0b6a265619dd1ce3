"""Estimator-driven adaptive refinement loop for the Poisson DPG method.

Each iteration solves, localizes the estimator, marks the ceil(n/2) elements
with the largest indicators (ties broken towards smaller element ids), and
bisects with conforming closure.  The loop is fully deterministic.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import DpgkitError
from .dpg_engine import assemble_normal, solve
from .mesh import assert_conforming, bisect
from .poisson2d import PoissonDPG


class EmptyMesh(DpgkitError):
    pass


def gaussian_source(scale=100.0):
    """Source concentrated at the corner (0, 0): exp(-scale (x^2 + y^2))."""

    def f(x, y):
        return np.exp(-scale * (x**2 + y**2))

    return f


def mark_top_half(eta_K):
    """Ids of the ceil(n/2) elements with the largest indicators.

    Stable: among equal indicators the smaller element id wins, so marking is
    invariant under permutations of the reported values.
    """
    eta_K = np.asarray(eta_K, dtype=float)
    if eta_K.size == 0:
        raise EmptyMesh("no element indicators to mark")
    count = math.ceil(eta_K.size / 2)
    order = np.argsort(-eta_K, kind="stable")
    return np.sort(order[:count])


def near_origin_fraction(mesh, radius=0.25, origin=(0.0, 0.0)):
    c = mesh.centroids()
    d = np.linalg.norm(c - np.asarray(origin), axis=1)
    return float((d <= radius).mean())


@dataclass
class AdaptIteration:
    """State after solving on one mesh of the adaptive sequence."""

    index: int
    mesh: object
    eta_K: np.ndarray
    eta: float
    marked: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    near_origin: float = 0.0

    @property
    def n_elements(self):
        return self.mesh.n_triangles


def adapt_loop(p, r, f, mesh, iterations, radius=0.25):
    """Run ``iterations`` solve-mark-bisect passes from ``mesh``.

    Returns iterations + 1 records; the last one holds the solve on the
    final mesh with an empty marked set.  Conformity is re-asserted after
    every refinement.
    """
    if iterations < 1:
        raise ValueError("need at least one adaptive iteration")
    history = []
    for it in range(iterations + 1):
        form = PoissonDPG(p, r, mesh, f)
        sol = solve(assemble_normal(form))
        record = AdaptIteration(
            index=it,
            mesh=mesh,
            eta_K=sol.eta_K,
            eta=sol.eta,
            near_origin=near_origin_fraction(mesh, radius=radius),
        )
        if it < iterations:
            record.marked = mark_top_half(sol.eta_K)
            mesh = bisect(mesh, record.marked)
            assert_conforming(mesh)
        history.append(record)
    return history
