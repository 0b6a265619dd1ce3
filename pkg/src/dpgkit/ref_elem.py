"""Reference-element polynomial bases and quadrature rules.

Intervals use shifted Legendre polynomials (orthonormal on [0, 1]) or nodal
Lagrange bases at Chebyshev-Lobatto points; triangles use either a nodal
Lagrange lattice basis or a modal basis obtained by Gram-Schmidt of the
monomials against the exact mass matrix (keeps element Gram matrices well
conditioned for test degrees up to ~6).

Quadrature: Gauss-Legendre on [0, 1]; a collapsed Gauss-Jacobi tensor rule on
the reference triangle {x, y >= 0, x + y <= 1}.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

from . import DpgkitError

MAX_QUAD_DEGREE = 30


class UnsupportedDegree(DpgkitError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """Quadrature points/weights exact for polynomials of total degree <= degree."""

    points: np.ndarray  # (n,) on the interval, (n, 2) on the triangle
    weights: np.ndarray
    degree: int


def quad_interval(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree <= degree."""
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise UnsupportedDegree(f"interval quadrature degree {degree} out of range")
    n = degree // 2 + 1
    t, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(points=(t + 1.0) / 2.0, weights=w / 2.0, degree=2 * n - 1)


def quad_triangle(degree):
    """Collapsed Gauss-Jacobi rule on the reference triangle, exact to ``degree``.

    The Duffy substitution x = xi (1 - eta), y = eta turns the triangle
    integral into an integral over the unit square with weight (1 - eta),
    handled exactly by a Gauss-Jacobi rule in eta.
    """
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise UnsupportedDegree(f"triangle quadrature degree {degree} out of range")
    n = degree // 2 + 1
    xi, wxi = np.polynomial.legendre.leggauss(n)
    xi = (xi + 1.0) / 2.0
    wxi = wxi / 2.0
    tj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - t) on [-1, 1]
    eta = (tj + 1.0) / 2.0
    weta = wj / 4.0
    X = np.outer(xi, 1.0 - eta)
    Y = np.broadcast_to(eta, (n, n))
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = np.outer(wxi, weta).ravel()
    return QuadRule(points=pts, weights=w, degree=2 * n - 1)


def simplex_monomial_integral(a, b):
    """Exact value of the monomial integral x^a y^b over the reference triangle."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


# ---------------------------------------------------------------------------
# interval bases
# ---------------------------------------------------------------------------


class IntervalBasis:
    """Polynomial basis on [0, 1] with values and first derivatives.

    kind "legendre": shifted Legendre, orthonormal in L2(0, 1).
    kind "lagrange": nodal basis at Chebyshev-Lobatto points (endpoints
    included for p >= 1), a partition of unity.
    """

    def __init__(self, degree, kind="legendre"):
        if degree < 0:
            raise UnsupportedDegree("negative polynomial degree")
        self.degree = degree
        self.size = degree + 1
        self.kind = kind
        if kind == "legendre":
            self.nodes = None
            self._coeff = np.eye(self.size)
        elif kind == "lagrange":
            if degree == 0:
                self.nodes = np.array([0.5])
            else:
                k = np.arange(degree + 1)
                self.nodes = (1.0 - np.cos(np.pi * k / degree)) / 2.0
            V = self._legendre_values(self.nodes)
            self.vandermonde_cond = np.linalg.cond(V)
            self._coeff = np.linalg.inv(V)
        else:
            raise ValueError(f"unknown interval basis kind {kind!r}")

    def _legendre_values(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        V = npleg.legvander(2.0 * x - 1.0, self.degree)
        return V * np.sqrt(2.0 * np.arange(self.size) + 1.0)

    def _legendre_derivs(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((x.size, self.size))
        for k in range(self.size):
            c = np.zeros(k + 1)
            c[k] = np.sqrt(2.0 * k + 1.0)
            out[:, k] = 2.0 * npleg.legval(2.0 * x - 1.0, npleg.legder(c))
        return out

    def values(self, x):
        """Basis values at points ``x``; shape (npts, size)."""
        return self._legendre_values(x) @ self._coeff

    def derivs(self, x):
        """First derivatives at points ``x``; shape (npts, size)."""
        return self._legendre_derivs(x) @ self._coeff


def interval_basis(p, kind="legendre"):
    return IntervalBasis(p, kind=kind)


# ---------------------------------------------------------------------------
# triangle bases
# ---------------------------------------------------------------------------

REF_TRI_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def triangle_monomial_exponents(p):
    """Exponent pairs (i, j), i + j <= p, ordered by total degree."""
    return [(d - j, j) for d in range(p + 1) for j in range(d + 1)]


def _monomial_values(exps, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.empty((pts.shape[0], len(exps)))
    for k, (i, j) in enumerate(exps):
        out[:, k] = pts[:, 0] ** i * pts[:, 1] ** j
    return out


def _monomial_grads(exps, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.zeros((pts.shape[0], len(exps), 2))
    x, y = pts[:, 0], pts[:, 1]
    for k, (i, j) in enumerate(exps):
        if i > 0:
            out[:, k, 0] = i * x ** (i - 1) * y**j
        if j > 0:
            out[:, k, 1] = j * x**i * y ** (j - 1)
    return out


class TriangleBasis:
    """Polynomial basis of total degree p on the reference triangle.

    kind "orthonormal": Gram-Schmidt of the monomials against the exact mass
    matrix (via Cholesky), orthonormal in L2 of the reference triangle.
    kind "lagrange": nodal basis on the equispaced barycentric lattice, a
    partition of unity; node layout is exposed for dof mapping.
    """

    def __init__(self, degree, kind="lagrange"):
        if degree < 0:
            raise UnsupportedDegree("negative polynomial degree")
        self.degree = degree
        self.size = (degree + 1) * (degree + 2) // 2
        self.kind = kind
        self._exps = triangle_monomial_exponents(degree)

        rule = quad_triangle(min(2 * degree, MAX_QUAD_DEGREE) if degree else 0)
        m = _monomial_values(self._exps, rule.points)
        mass = m.T @ (rule.weights[:, None] * m)
        self._chol = np.linalg.cholesky(mass)

        if kind == "orthonormal":
            self.nodes = None
            self._coeff = None
        elif kind == "lagrange":
            self.nodes, self.node_kinds = _lattice_nodes(degree)
            V = self._ortho_values(self.nodes)
            self.vandermonde_cond = np.linalg.cond(V)
            self._coeff = np.linalg.inv(V)
        else:
            raise ValueError(f"unknown triangle basis kind {kind!r}")

    def _ortho_values(self, pts):
        m = _monomial_values(self._exps, pts)
        return np.linalg.solve(self._chol, m.T).T

    def _ortho_grads(self, pts):
        g = _monomial_grads(self._exps, pts)
        out = np.empty_like(g)
        for d in range(2):
            out[:, :, d] = np.linalg.solve(self._chol, g[:, :, d].T).T
        return out

    def values(self, pts):
        """Basis values at reference points; shape (npts, size)."""
        v = self._ortho_values(pts)
        return v if self._coeff is None else v @ self._coeff

    def grads(self, pts):
        """Reference gradients at points; shape (npts, size, 2)."""
        g = self._ortho_grads(pts)
        if self._coeff is None:
            return g
        out = np.empty_like(g)
        for d in range(2):
            out[:, :, d] = g[:, :, d] @ self._coeff
        return out


def _lattice_nodes(q):
    """Equispaced lattice nodes and their (kind, data) classification.

    Kinds: ("vertex", v) for v in 0..2; ("edge", e, k) with e the local edge
    opposite vertex e and k = 0..q-2 counting along the edge from vertex
    (e+1)%3 towards (e+2)%3; ("interior", k).
    """
    nodes = []
    kinds = []
    n_int = 0
    for j in range(q + 1):
        for i in range(q + 1 - j):
            nodes.append((i / q if q else 1 / 3, j / q if q else 1 / 3))
            if q == 0:
                kinds.append(("interior", 0))
                continue
            corner = {(0, 0): 0, (q, 0): 1, (0, q): 2}.get((i, j))
            if corner is not None:
                kinds.append(("vertex", corner))
            elif j == 0:
                kinds.append(("edge", 2, i - 1))  # edge v0->v1
            elif i + j == q:
                kinds.append(("edge", 0, j - 1))  # edge v1->v2
            elif i == 0:
                kinds.append(("edge", 1, q - j - 1))  # edge v2->v0
            else:
                kinds.append(("interior", n_int))
                n_int += 1
    return np.array(nodes), kinds


def triangle_basis(p, kind="lagrange"):
    return TriangleBasis(p, kind=kind)
