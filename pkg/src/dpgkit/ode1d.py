"""1D model problem u' = f on (0, 1), u(0) = 0, in three formulations.

* :class:`LeastSquaresNoIBP` - no integration by parts; reduces to the
  classical L2 least-squares method (broken polynomial test space with the
  plain L2 Gram).
* :class:`OneElementPG` - integration by parts on a single element with the
  endpoint value as an extra unknown; with test degree p+1 the computed test
  space coincides with the ideal optimal one, so the discrete solution is
  the L2 projection of the exact solution and the endpoint unknown is exact.
* :class:`HybridDPG1D` - the multi-element hybrid with interface flux
  unknowns u_hat_1..u_hat_m (u_hat_0 = 0 is not a dof); reduces to
  :class:`OneElementPG` at matrix level when m = 1.

Closed-form companions used as oracles: the trial-to-test image
T(u, u_hat_1) = u_hat_1 + int_x^1 u(s) ds on one element, and the piecewise
flux test function (1 on the element left of the interface, x - x_{i+1} - 1
on the element right of it, 0 elsewhere).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse

from . import DpgkitError
from .dpg_engine import DpgFormulation
from .mesh import Mesh1D
from .ref_elem import interval_basis, quad_interval


class DegreeTooLow(DpgkitError):
    pass


@dataclass
class Ode1dProblem:
    """Right-hand side plus, optionally, the exact solution and u(1)."""

    f: Callable
    u: Optional[Callable] = None
    u1: Optional[float] = None

    def __post_init__(self):
        if self.u is not None:
            u0 = float(self.u(np.array([0.0]))[0] if _vectorized(self.u) else self.u(0.0))
            if abs(u0) > 1e-12:
                raise ValueError(f"exact solution has u(0) = {u0}, expected 0")
            # spot-check u' = f at a few interior points
            for x in (0.21, 0.5, 0.83):
                h = 1e-6
                du = (self.u(x + h) - self.u(x - h)) / (2 * h)
                fx = self.f(x)
                if abs(du - fx) > 1e-5 * (1.0 + abs(fx)):
                    raise ValueError(f"u'({x}) = {du} does not match f({x}) = {fx}")


def _vectorized(fn):
    try:
        out = fn(np.array([0.5]))
    except Exception:
        return False
    return np.ndim(out) == 1


def layer_solution(M):
    """Sharp-layer exact solution and its data f = u'.

    u = (exp(M(x-1)) - exp(-M)) / (1 - exp(-M)), so u(0) = 0 and u(1) = 1.
    """
    if M <= 0:
        raise ValueError("layer steepness M must be positive")
    den = 1.0 - np.exp(-M)

    def u(x):
        return (np.exp(M * (np.asarray(x) - 1.0)) - np.exp(-M)) / den

    def f(x):
        return M * np.exp(M * (np.asarray(x) - 1.0)) / den

    return u, f


def layer_problem(M):
    u, f = layer_solution(M)
    return Ode1dProblem(f=f, u=u, u1=1.0)


# ---------------------------------------------------------------------------
# quadrature of non-polynomial data
# ---------------------------------------------------------------------------


def integrate_against_basis(g, basis, tol=1e-13, max_panels=512):
    """int_0^1 g(t) phi_i(t) dt for every basis function.

    Composite Gauss with dyadic panel refinement until the result settles;
    handles sharp-layer loads that a single rule of capped degree cannot.
    """
    rule = quad_interval(min(2 * basis.degree + 12, 24))
    prev = None
    n_panels = 1
    while True:
        edges = np.linspace(0.0, 1.0, n_panels + 1)
        dx = 1.0 / n_panels
        pts = (edges[:-1][:, None] + dx * rule.points[None, :]).ravel()
        w = np.tile(rule.weights * dx, n_panels)
        vals = basis.values(pts)
        acc = vals.T @ (w * np.asarray(g(pts), dtype=float))
        if prev is not None and np.abs(acc - prev).max() <= tol * (1.0 + np.abs(acc).max()):
            return acc
        if n_panels >= max_panels:
            return acc
        prev = acc
        n_panels *= 2


# ---------------------------------------------------------------------------
# formulations
# ---------------------------------------------------------------------------


class OneElementPG(DpgFormulation):
    """Single-element PG formulation with the integrated-by-parts form.

    b((u, u_hat_1), v) = u_hat_1 v(1) - int u v', test norm
    ||v||^2 = ||v'||^2 + |v(1)|^2, trial = P_p x R, test = P_{p+1}.
    """

    def __init__(self, p, problem):
        self.p = p
        self.problem = problem
        self.trial_basis = interval_basis(p)
        self.test_basis = interval_basis(p + 1)
        rule = quad_interval(2 * (p + 1) + 2)
        w = rule.weights
        Vu = self.trial_basis.values(rule.points)
        Dt = self.test_basis.derivs(rule.points)
        t1 = self.test_basis.values(np.array([1.0]))[0]
        self._G = Dt.T @ (w[:, None] * Dt) + np.outer(t1, t1)
        self._B = np.hstack([-(Dt.T @ (w[:, None] * Vu)), t1[:, None]])
        self._load = integrate_against_basis(problem.f, self.test_basis)
        self._mass_u = Vu.T @ (w[:, None] * Vu)

    @property
    def n_elements(self):
        return 1

    @property
    def n_trial(self):
        return self.p + 2

    @property
    def n_interior(self):
        return self.p + 1

    def element_gram(self, k):
        return self._G

    def element_bmat(self, k):
        return self._B

    def element_load(self, k):
        return self._load

    def element_trial_dofs(self, k):
        return np.arange(self.p + 2)

    def xnorm_gram(self):
        S = scipy.linalg.block_diag(self._mass_u, np.array([[1.0]]))
        return scipy.sparse.csr_matrix(S)

    def evaluate(self, x, points):
        """u_h values at points; the trailing coefficient is u_hat_1."""
        return self.trial_basis.values(np.asarray(points)) @ x[: self.p + 1]

    def u1_value(self, x):
        return float(x[self.p + 1])


class HybridDPG1D(DpgFormulation):
    """Hybrid DPG on m intervals with interface fluxes u_hat_1..u_hat_m.

    Element form: u_hat_i y(x_i-) - u_hat_{i-1} y(x_{i-1}+) - int u y' with
    u_hat_0 = 0; element test norm |y(x_i-)|^2 + ||y'||^2; test degree p+1.
    """

    def __init__(self, p, mesh, problem):
        self.p = p
        self.mesh = mesh
        self.problem = problem
        self.m = mesh.n_elements
        self.trial_basis = interval_basis(p)
        self.test_basis = interval_basis(p + 1)
        rule = quad_interval(2 * (p + 1) + 2)
        w = rule.weights
        Vu = self.trial_basis.values(rule.points)
        Dt = self.test_basis.derivs(rule.points)
        self._t0 = self.test_basis.values(np.array([0.0]))[0]
        self._t1 = self.test_basis.values(np.array([1.0]))[0]
        self._Kref = Dt.T @ (w[:, None] * Dt)
        self._Bu = -(Dt.T @ (w[:, None] * Vu))
        self._mass_u = Vu.T @ (w[:, None] * Vu)

    @property
    def n_elements(self):
        return self.m

    @property
    def n_trial(self):
        return self.m * (self.p + 2)

    @property
    def n_interior(self):
        return self.m * (self.p + 1)

    def flux_dof(self, i):
        """Global dof of u_hat_i, i = 1..m."""
        return self.m * (self.p + 1) + i - 1

    def element_gram(self, k):
        h = self.mesh.lengths[k]
        return self._Kref / h + np.outer(self._t1, self._t1)

    def element_bmat(self, k):
        cols = [self._Bu]
        if k > 0:
            cols.append(-self._t0[:, None])
        cols.append(self._t1[:, None])
        return np.hstack(cols)

    def element_load(self, k):
        a = self.mesh.vertices[k]
        h = self.mesh.lengths[k]
        return h * integrate_against_basis(
            lambda t: self.problem.f(a + h * t), self.test_basis
        )

    def element_trial_dofs(self, k):
        dofs = list(range(k * (self.p + 1), (k + 1) * (self.p + 1)))
        if k > 0:
            dofs.append(self.flux_dof(k))
        dofs.append(self.flux_dof(k + 1))
        return np.asarray(dofs, dtype=np.int64)

    def xnorm_gram(self):
        blocks = [self.mesh.lengths[k] * self._mass_u for k in range(self.m)]
        blocks.append(np.eye(self.m))
        return scipy.sparse.csr_matrix(scipy.linalg.block_diag(*blocks))

    def evaluate(self, x, points):
        points = np.asarray(points, dtype=float)
        out = np.empty_like(points)
        elem = np.clip(np.searchsorted(self.mesh.vertices, points, side="right") - 1, 0, self.m - 1)
        for k in range(self.m):
            sel = elem == k
            if not sel.any():
                continue
            a, h = self.mesh.vertices[k], self.mesh.lengths[k]
            t = (points[sel] - a) / h
            coeffs = x[k * (self.p + 1) : (k + 1) * (self.p + 1)]
            out[sel] = self.trial_basis.values(t) @ coeffs
        return out

    def flux_values(self, x):
        """Values of u_hat_1..u_hat_m."""
        return x[self.m * (self.p + 1) :]


class LeastSquaresNoIBP(DpgFormulation):
    """Classical least squares for u' = f: minimizes ||f - u_h'|| over a
    conforming piecewise P_p trial space with u(0) = 0.

    Test space is broken P_p with the plain L2 mass Gram; u_h' lies in it,
    so the DPG solve is exactly the least-squares minimizer.
    """

    def __init__(self, p, mesh, problem):
        if p < 1:
            raise DegreeTooLow("least-squares trial space needs p >= 1")
        self.p = p
        self.mesh = mesh
        self.problem = problem
        self.m = mesh.n_elements
        self.trial_basis = interval_basis(p, kind="lagrange")
        self.test_basis = interval_basis(p)
        rule = quad_interval(2 * p + 2)
        w = rule.weights
        Vt = self.test_basis.values(rule.points)
        Du = self.trial_basis.derivs(rule.points)
        self._Bref = Vt.T @ (w[:, None] * Du)  # b(e_j, y_i) = int u_j' y_i
        self._mass_ref = Vt.T @ (w[:, None] * Vt)

    @property
    def n_elements(self):
        return self.m

    @property
    def n_trial(self):
        return self.m * self.p  # nodes minus the eliminated one at x = 0

    def _node_dof(self, k, local):
        return k * self.p + local - 1  # -1 drops the x = 0 node

    def element_gram(self, k):
        return self.mesh.lengths[k] * self._mass_ref

    def element_bmat(self, k):
        B = self._Bref
        if k == 0:
            B = B[:, 1:]
        return B

    def element_load(self, k):
        a, h = self.mesh.vertices[k], self.mesh.lengths[k]
        return h * integrate_against_basis(
            lambda t: self.problem.f(a + h * t), self.test_basis
        )

    def element_trial_dofs(self, k):
        start = 0 if k > 0 else 1
        return np.asarray(
            [self._node_dof(k, l) for l in range(start, self.p + 1)], dtype=np.int64
        )

    def evaluate(self, x, points):
        points = np.asarray(points, dtype=float)
        out = np.empty_like(points)
        elem = np.clip(np.searchsorted(self.mesh.vertices, points, side="right") - 1, 0, self.m - 1)
        full = np.concatenate([[0.0], x])  # re-insert the eliminated node
        for k in range(self.m):
            sel = elem == k
            if not sel.any():
                continue
            a, h = self.mesh.vertices[k], self.mesh.lengths[k]
            t = (points[sel] - a) / h
            coeffs = full[[k * self.p + l for l in range(self.p + 1)]]
            out[sel] = self.trial_basis.values(t) @ coeffs
        return out


def formulation_noibp(p, mesh, problem):
    return LeastSquaresNoIBP(p, mesh, problem)


def formulation_onelem(p, problem):
    return OneElementPG(p, problem)


def formulation_dpg1d(p, mesh, problem):
    return HybridDPG1D(p, mesh, problem)


# ---------------------------------------------------------------------------
# closed-form oracles and projections
# ---------------------------------------------------------------------------


def onelem_closed_form_T(p):
    """Coefficient matrix of the exact trial-to-test image on one element.

    Column j holds the test-basis coefficients of u_hat_1 + int_x^1 u_j(s) ds
    for the j-th trial basis function; the last column is the constant 1
    image of the endpoint unknown.
    """
    trial = interval_basis(p)
    test = interval_basis(p + 1)
    rule = quad_interval(2 * (p + 1) + 2)
    Vt = test.values(rule.points)
    w = rule.weights
    cols = []
    for j in range(p + 1):
        # antiderivative of the shifted Legendre basis function
        c = np.zeros(j + 1)
        c[j] = np.sqrt(2.0 * j + 1.0)
        F = np.polynomial.Legendre(c, domain=[0.0, 1.0]).integ()
        g = F(1.0) - F(rule.points)
        cols.append(Vt.T @ (w * g))
    one = np.ones_like(rule.points)
    cols.append(Vt.T @ (w * one))
    return np.column_stack(cols)


def hybrid_flux_test_coeffs(form, i):
    """Exact test-space coefficients of T(0,..,u_hat_i,..,0), per element.

    The image is 1 on element i-1 (0-based), x - x_{i+1} - 1 on element i,
    and zero elsewhere; returns a (m, p+2) coefficient array.
    """
    p, mesh = form.p, form.mesh
    test = form.test_basis
    rule = quad_interval(2 * (p + 1) + 2)
    Vt = test.values(rule.points)
    w = rule.weights
    mass = Vt.T @ (w[:, None] * Vt)
    out = np.zeros((form.m, p + 2))
    g_left = np.ones_like(rule.points)
    out[i - 1] = np.linalg.solve(mass, Vt.T @ (w * g_left))
    if i < form.m:
        a, h = mesh.vertices[i], mesh.lengths[i]
        x = a + h * rule.points
        g_right = x - mesh.vertices[i + 1] - 1.0
        out[i] = np.linalg.solve(mass, Vt.T @ (w * g_right))
    return out


def broken_l2_projection(u, p, mesh):
    """Element-wise L2 projection of ``u`` onto broken P_p; block coefficients.

    Assembled independently of any DPG machinery: per-element mass matrix
    and adaptive quadrature of the data.
    """
    basis = interval_basis(p)
    rule = quad_interval(2 * p + 2)
    V = basis.values(rule.points)
    mass_ref = V.T @ (rule.weights[:, None] * V)
    out = np.empty(mesh.n_elements * (p + 1))
    for k in range(mesh.n_elements):
        a, h = mesh.vertices[k], mesh.lengths[k]
        rhs = h * integrate_against_basis(lambda t: u(a + h * t), basis)
        out[k * (p + 1) : (k + 1) * (p + 1)] = np.linalg.solve(h * mass_ref, rhs)
    return out


def l2_projection_onelem(u, p):
    """L2(0, 1) projection onto P_p, in the trial basis of OneElementPG."""
    return broken_l2_projection(u, p, Mesh1D(np.array([0.0, 1.0])))


def eval_broken_legendre(coeffs, p, mesh, points):
    """Evaluate block Legendre coefficients (as from broken_l2_projection)."""
    basis = interval_basis(p)
    points = np.asarray(points, dtype=float)
    out = np.empty_like(points)
    elem = np.clip(
        np.searchsorted(mesh.vertices, points, side="right") - 1, 0, mesh.n_elements - 1
    )
    for k in range(mesh.n_elements):
        sel = elem == k
        if not sel.any():
            continue
        a, h = mesh.vertices[k], mesh.lengths[k]
        t = (points[sel] - a) / h
        out[sel] = basis.values(t) @ coeffs[k * (p + 1) : (k + 1) * (p + 1)]
    return out


def hybrid_containment_check(p, mesh):
    """Max Y-distance of the non-hybrid optimal test functions to the hybrid
    test space; vanishes by the hybridization theorem.

    The non-hybrid test functions solve the Riesz problem constrained to the
    continuous subspace of the broken test space; each is normalized and its
    distance to the span of the hybrid trial-to-test images is measured in
    the Y-norm.
    """
    from . import dpg_engine

    problem = Ode1dProblem(f=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
    form = HybridDPG1D(p, mesh, problem)
    m, nt = form.m, p + 2
    dim_y = m * nt

    M = np.zeros((dim_y, dim_y))
    for k in range(m):
        M[k * nt : (k + 1) * nt, k * nt : (k + 1) * nt] = form.element_gram(k)

    # hybrid test space: scatter the element-local trial-to-test columns
    W = np.zeros((dim_y, form.n_trial))
    for k in range(m):
        T = dpg_engine.trial_to_test(form.element_gram(k), form.element_bmat(k))
        dofs = form.element_trial_dofs(k)
        W[k * nt : (k + 1) * nt, dofs] += T

    # continuity constraints y(x_i+) = y(x_i-) at interior vertices
    t0 = form.test_basis.values(np.array([0.0]))[0]
    t1 = form.test_basis.values(np.array([1.0]))[0]
    if m > 1:
        C = np.zeros((m - 1, dim_y))
        for i in range(1, m):
            C[i - 1, i * nt : (i + 1) * nt] = t0
            C[i - 1, (i - 1) * nt : i * nt] = -t1
        Z = scipy.linalg.null_space(C)
    else:
        Z = np.eye(dim_y)

    # b_0 functionals of the non-hybrid trial basis: broken P_p plus u_hat_m
    rhs_cols = np.zeros((dim_y, m * (p + 1) + 1))
    for k in range(m):
        rhs_cols[k * nt : (k + 1) * nt, k * (p + 1) : (k + 1) * (p + 1)] = form._Bu
    rhs_cols[(m - 1) * nt : m * nt, -1] = t1

    A0 = Z.T @ M @ Z
    WtMW = W.T @ M @ W
    WtM = W.T @ M
    max_dist = 0.0
    for j in range(rhs_cols.shape[1]):
        c = np.linalg.solve(A0, Z.T @ rhs_cols[:, j])
        y0 = Z @ c
        norm = np.sqrt(y0 @ M @ y0)
        if norm == 0.0:
            continue
        y0 /= norm
        # explicit residual avoids the sqrt(eps) cancellation floor of the
        # quadratic-form identity
        a = np.linalg.solve(WtMW, WtM @ y0)
        r = y0 - W @ a
        max_dist = max(max_dist, np.sqrt(max(r @ M @ r, 0.0)))
    return float(max_dist)
