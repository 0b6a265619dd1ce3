"""DPG discretization of the Dirichlet Laplacian with interface fluxes.

Trial space: an H1-conforming Lagrange field of degree p+1 with homogeneous
boundary nodes eliminated, times one flux unknown per skeleton facet carrying
p+1 Legendre modes in the facet arclength parameter (boundary facets carry
fluxes too; no boundary condition applies to them).  Test space: broken
polynomials of degree r >= p+2 per element with the full local H1 inner
product as Gram.  The bilinear form is

    b((w, q_hat), v) = sum_K int_K grad w . grad v
                     - sum_K sum_{F in dK} sign(K, F) int_F q_hat v

where the flux is stored against the facet's fixed normal and sign(K, F) is
+1 when that normal is outward for K.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import DpgkitError, la_core
from .dpg_engine import DpgFormulation, assemble_normal, solve
from .mesh import build_skeleton, uniform_square_mesh
from .ref_elem import (
    REF_TRI_VERTICES,
    interval_basis,
    quad_interval,
    quad_triangle,
    triangle_basis,
)


class DegreeViolation(DpgkitError):
    pass


@dataclass
class ManufacturedCase:
    """Exact solution data for error measurement: f = -laplace(u)."""

    name: str
    u: Callable
    grad_u: Callable
    f: Callable


def sin_sin_case():
    """Smooth manufactured solution u = sin(pi x) sin(pi y) on the unit square."""

    def u(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def grad_u(x, y):
        return np.stack(
            [
                np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
            ],
            axis=-1,
        )

    def f(x, y):
        return 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)

    return ManufacturedCase("sin_sin", u, grad_u, f)


def bubble_case():
    """Polynomial solution u = x(1-x)y(1-y); representable once p >= 3."""

    def u(x, y):
        return x * (1.0 - x) * y * (1.0 - y)

    def grad_u(x, y):
        return np.stack(
            [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)],
            axis=-1,
        )

    def f(x, y):
        return 2.0 * (y * (1.0 - y) + x * (1.0 - x))

    return ManufacturedCase("bubble", u, grad_u, f)


class PoissonDPG(DpgFormulation):
    """Element providers for the flux-hybridized Poisson DPG method."""

    def __init__(self, p, r, mesh, f):
        if r < p + 2:
            raise DegreeViolation(f"test degree r = {r} violates r >= p + 2 = {p + 2}")
        self.p = p
        self.r = r
        self.q = p + 1  # scalar field degree
        self.mesh = mesh
        self.skeleton = build_skeleton(mesh)
        self.f = f

        self.test_basis = triangle_basis(r, kind="orthonormal")
        self.trial_basis = triangle_basis(self.q, kind="lagrange")
        self.trace_basis = interval_basis(p)

        self._build_dof_maps()
        self._build_reference_data()
        self._build_geometry()

    # -- dof layout --------------------------------------------------------

    def _build_dof_maps(self):
        q, mesh, skel = self.q, self.mesh, self.skeleton
        nv, nf = mesh.n_vertices, skel.n_facets
        per_edge = q - 1
        per_tri = (q - 1) * (q - 2) // 2
        n_nodes = nv + nf * per_edge + mesh.n_triangles * per_tri

        boundary = np.zeros(n_nodes, dtype=bool)
        bfacets = np.where(skel.is_boundary)[0]
        for fct in bfacets:
            a, b = skel.facet_vertices[fct]
            boundary[[a, b]] = True
            boundary[nv + fct * per_edge : nv + (fct + 1) * per_edge] = True

        self._node_dof = np.full(n_nodes, -1, dtype=np.int64)
        free = np.where(~boundary)[0]
        self._node_dof[free] = np.arange(free.size)
        self.n_interior = free.size
        self.n_trace = nf * (self.p + 1)

        # per-element global node ids in local lattice order
        self._elem_nodes = np.empty((mesh.n_triangles, self.trial_basis.size), dtype=np.int64)
        for k in range(mesh.n_triangles):
            tri = mesh.triangles[k]
            for ln, kind in enumerate(self.trial_basis.node_kinds):
                tag = kind[0]
                if tag == "vertex":
                    gid = tri[kind[1]]
                elif tag == "edge":
                    e, kk = kind[1], kind[2]
                    fct = skel.tri_facets[k, e]
                    a, b = tri[(e + 1) % 3], tri[(e + 2) % 3]
                    idx = kk if a < b else per_edge - 1 - kk
                    gid = nv + fct * per_edge + idx
                else:
                    gid = nv + nf * per_edge + k * per_tri + kind[1]
                self._elem_nodes[k, ln] = gid

    @property
    def n_elements(self):
        return self.mesh.n_triangles

    @property
    def n_trial(self):
        return self.n_interior + self.n_trace

    def trace_dof(self, facet, mode):
        return self.n_interior + facet * (self.p + 1) + mode

    # -- reference-element data ---------------------------------------------

    def _build_reference_data(self):
        vol = quad_triangle(2 * self.r + 2)
        self._load_rule = quad_triangle(min(2 * self.r + 6, 30))
        edge = quad_interval(2 * self.r)
        self._edge_rule = edge

        w = vol.weights
        Vt = self.test_basis.values(vol.points)
        Gt = self.test_basis.grads(vol.points)
        Gu = self.trial_basis.grads(vol.points)
        self._test_mass_ref = Vt.T @ (w[:, None] * Vt)
        # P[a][b][i, j] = sum_q w grad_a(test_i) grad_b(test_j); likewise for
        # the mixed test/trial blocks, contracted with Jinv Jinv^T per element
        self._test_PP = [
            [Gt[:, :, a].T @ (w[:, None] * Gt[:, :, b]) for b in range(2)] for a in range(2)
        ]
        self._mix_PP = [
            [Gt[:, :, a].T @ (w[:, None] * Gu[:, :, b]) for b in range(2)] for a in range(2)
        ]
        self._load_vals = self.test_basis.values(self._load_rule.points)

        # test values on each local edge for both facet orientations
        self._edge_test_vals = []
        for e in range(3):
            ra = REF_TRI_VERTICES[(e + 1) % 3]
            rb = REF_TRI_VERTICES[(e + 2) % 3]
            fwd = ra + edge.points[:, None] * (rb - ra)
            rev = ra + (1.0 - edge.points)[:, None] * (rb - ra)
            self._edge_test_vals.append(
                (self.test_basis.values(fwd), self.test_basis.values(rev))
            )
        self._edge_trace_vals = self.trace_basis.values(edge.points)

    def _build_geometry(self):
        c = self.mesh.corners()
        J = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=-1)
        self._J = J
        self._detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self._Jinv = np.linalg.inv(J)
        self._v0 = c[:, 0]

    def _metric(self, k):
        """Jinv Jinv^T, the gradient transform contracted with itself."""
        Ji = self._Jinv[k]
        return Ji @ Ji.T

    # -- element providers ---------------------------------------------------

    def facet_sign(self, k, e):
        """+1 when element k is on the left of its local edge e."""
        return int(self.skeleton.tri_signs[k, e])

    def element_gram(self, k):
        A = self._metric(k)
        stiff = sum(A[a, b] * self._test_PP[a][b] for a in range(2) for b in range(2))
        G = self._detJ[k] * (self._test_mass_ref + stiff)
        return 0.5 * (G + G.T)

    def element_bmat(self, k):
        A = self._metric(k)
        mix = sum(A[a, b] * self._mix_PP[a][b] for a in range(2) for b in range(2))
        B_int = self._detJ[k] * mix
        keep = self._node_dof[self._elem_nodes[k]] >= 0
        cols = [B_int[:, keep]]
        w = self._edge_rule.weights
        for e in range(3):
            fct = self.skeleton.tri_facets[k, e]
            a, b = self.mesh.triangles[k][(e + 1) % 3], self.mesh.triangles[k][(e + 2) % 3]
            vvals = self._edge_test_vals[e][0 if a < b else 1]
            sigma = self.facet_sign(k, e)
            length = self.skeleton.lengths[fct]
            cols.append(-sigma * length * (vvals.T @ (w[:, None] * self._edge_trace_vals)))
        return np.hstack(cols)

    def element_load(self, k):
        pts = self._v0[k] + self._load_rule.points @ self._J[k].T
        fx = self.f(pts[:, 0], pts[:, 1])
        return self._detJ[k] * (self._load_vals.T @ (self._load_rule.weights * fx))

    def element_trial_dofs(self, k):
        dofs = self._node_dof[self._elem_nodes[k]]
        dofs = dofs[dofs >= 0]
        trace = [
            self.trace_dof(self.skeleton.tri_facets[k, e], m)
            for e in range(3)
            for m in range(self.p + 1)
        ]
        return np.concatenate([dofs, np.asarray(trace, dtype=np.int64)])

    # -- trial-space norm for the inf-sup diagnostic --------------------------

    def xnorm_gram(self):
        """Surrogate X-norm Gram: H1 for the field, and for the fluxes the
        facet (arclength) L2 mass scaled by the facet length, i.e. |F|^2 per
        orthonormal mode.  The extra length factor mimics the h-scaling of
        the trace norm, which keeps the inf-sup diagnostic mesh-robust; the
        true trace norm is a quotient norm and is not computable facet-wise.
        """
        n = self.n_trial
        trip = la_core.TripletMatrix(n, n)
        vol = quad_triangle(2 * self.q)
        w = vol.weights
        Vu = self.trial_basis.values(vol.points)
        Gu = self.trial_basis.grads(vol.points)
        mass_ref = Vu.T @ (w[:, None] * Vu)
        PP = [
            [Gu[:, :, a].T @ (w[:, None] * Gu[:, :, b]) for b in range(2)] for a in range(2)
        ]
        for k in range(self.n_elements):
            A = self._metric(k)
            stiff = sum(A[a, b] * PP[a][b] for a in range(2) for b in range(2))
            S_K = self._detJ[k] * (mass_ref + stiff)
            dofs = self._node_dof[self._elem_nodes[k]]
            keep = dofs >= 0
            trip.add_block(dofs[keep], dofs[keep], S_K[np.ix_(keep, keep)])
        for fct in range(self.skeleton.n_facets):
            for m in range(self.p + 1):
                d = self.trace_dof(fct, m)
                trip.add(d, d, float(self.skeleton.lengths[fct] ** 2))
        return trip.tocsr()

    # -- evaluation helpers ----------------------------------------------------

    def element_field_coeffs(self, x, k):
        """Lagrange coefficients of u_h on element k, zeros at boundary nodes."""
        dofs = self._node_dof[self._elem_nodes[k]]
        coeffs = np.zeros(self.trial_basis.size)
        keep = dofs >= 0
        coeffs[keep] = x[dofs[keep]]
        return coeffs

    def flux_coeffs(self, x, facet):
        """Legendre-mode coefficients of the flux on one facet."""
        start = self.n_interior + facet * (self.p + 1)
        return x[start : start + self.p + 1]


def poisson_formulation(p, r, mesh, f):
    return PoissonDPG(p, r, mesh, f)


def h1_error(form, x, u_exact, grad_exact):
    """Full broken H1 distance between the exact solution and the field part."""
    rule = quad_triangle(min(2 * (form.p + 1) + 4, 30))
    Vu = form.trial_basis.values(rule.points)
    Gu = form.trial_basis.grads(rule.points)
    total = 0.0
    for k in range(form.n_elements):
        coeffs = form.element_field_coeffs(x, k)
        pts = form._v0[k] + rule.points @ form._J[k].T
        uh = Vu @ coeffs
        g_ref = np.tensordot(Gu, coeffs, axes=([1], [0]))  # (npts, 2)
        gh = g_ref @ form._Jinv[k]
        du = uh - u_exact(pts[:, 0], pts[:, 1])
        dg = gh - grad_exact(pts[:, 0], pts[:, 1])
        total += form._detJ[k] * (
            (rule.weights * du**2).sum() + (rule.weights[:, None] * dg**2).sum()
        )
    return float(np.sqrt(total))


def facet_flux_projection(form, grad_exact):
    """L2 projection of n . grad(u) onto the facet modes, facet by facet.

    Exact for representable fluxes; used to check sign conventions and the
    recovered trace unknowns.
    """
    skel = form.skeleton
    rule = form._edge_rule
    Vtr = form.trace_basis.values(rule.points)
    out = np.empty((skel.n_facets, form.p + 1))
    for fct in range(skel.n_facets):
        a, b = skel.facet_vertices[fct]
        pa, pb = form.mesh.vertices[a], form.mesh.vertices[b]
        pts = pa + rule.points[:, None] * (pb - pa)
        g = grad_exact(pts[:, 0], pts[:, 1]) @ skel.normals[fct]
        out[fct] = Vtr.T @ (rule.weights * g)
    return out


def convergence_study(p, r, n_list, case):
    """Uniform-refinement study; returns rows (n, h/sqrt2, error, eta, ratio)
    and the least-squares slope of log(error) against log(h)."""
    rows = []
    residuals = []
    for n in n_list:
        mesh = uniform_square_mesh(n)
        form = PoissonDPG(p, r, mesh, case.f)
        system = assemble_normal(form)
        sol = solve(system)
        err = h1_error(form, sol.x, case.u, case.grad_u)
        rows.append(
            {
                "n": int(n),
                "h_over_sqrt2": 1.0 / n,
                "h1_error": err,
                "estimator": sol.eta,
                "ratio": sol.eta / err if err > 0 else float("nan"),
            }
        )
        rhs_norm = np.linalg.norm(system.rhs)
        residuals.append(
            float(np.linalg.norm(system.A @ sol.x - system.rhs) / rhs_norm) if rhs_norm else 0.0
        )
    slope = None
    if len(rows) >= 2:
        h = np.log([np.sqrt(2.0) / row["n"] for row in rows])
        e = np.log([row["h1_error"] for row in rows])
        slope = float(np.polyfit(h, e, 1)[0])
    return {
        "case": case.name,
        "p": p,
        "r": r,
        "rows": rows,
        "slope": slope,
        "solver_residuals": residuals,
    }
