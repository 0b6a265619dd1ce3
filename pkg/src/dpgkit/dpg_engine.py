"""Formulation-agnostic DPG machinery.

A formulation supplies, per element K, the test-space Gram matrix G_K, the
trial-test block B_K with entries b(e_j, y_i), the load vector with entries
l(y_i), and the local-to-global trial dof map.  Everything else lives here:
the element-local trial-to-test solves T_K = G_K^-1 B_K, the global normal
matrix A = B^T M^-1 B assembled element by element, the equivalent mixed
(saddle) assembly kept as a cross-validation path, energy norms, the error
estimator recovered element-wise, and an inf-sup diagnostic.
"""

import abc
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import DpgkitError, la_core


class MissingElementData(DpgkitError):
    pass


class DpgFormulation(abc.ABC):
    """Per-element providers for a DPG discretization."""

    @property
    @abc.abstractmethod
    def n_elements(self):
        ...

    @property
    @abc.abstractmethod
    def n_trial(self):
        """Total number of global trial dofs (interior + trace)."""

    @abc.abstractmethod
    def element_gram(self, k):
        """Local test Gram matrix G_K realizing the Y(K)-inner product."""

    @abc.abstractmethod
    def element_bmat(self, k):
        """Local block B_K with B[i, j] = b(e_j, y_i), rows over test dofs."""

    @abc.abstractmethod
    def element_load(self, k):
        """Local load with entries l(y_i)."""

    @abc.abstractmethod
    def element_trial_dofs(self, k):
        """Global trial dof indices for the local trial columns."""

    def xnorm_gram(self):
        """Trial-space norm Gram used by the inf-sup diagnostic."""
        raise NotImplementedError


@dataclass
class DpgSystem:
    """Assembled normal equations plus retained element data."""

    A: scipy.sparse.csr_matrix
    rhs: np.ndarray
    n_trial: int
    element_dofs: list
    element_gram: list
    element_bmat: list
    element_load: list
    formulation: DpgFormulation

    @property
    def has_element_data(self):
        return self.element_gram is not None


@dataclass
class DpgSolution:
    """Trial coefficients, per-element estimator data and its norms."""

    x: np.ndarray
    eps: list  # per-element estimator coefficients, or None
    eta_K: np.ndarray
    eta: float


def trial_to_test(G_K, B_K):
    """Columns of T_K = G_K^-1 B_K: test-space coefficients of T^r e_j."""
    factor = la_core.SpdFactor(G_K)
    T = factor.solve(np.asarray(B_K, dtype=float))
    resid = np.abs(np.asarray(G_K) @ T - B_K).max()
    scale = np.abs(B_K).max() or 1.0
    if resid > 1e-10 * scale:
        raise la_core.NotSPD(f"local trial-to-test residual {resid:.3e} too large")
    return T


def assemble_normal(formulation, element_order=None, keep_element_data=True):
    """Assemble A = B^T M^-1 B and the reduced load, element by element.

    The element visit order does not affect the compressed matrix (triplet
    compression is order-independent), so assembly is deterministic.
    """
    n = formulation.n_trial
    trip = la_core.TripletMatrix(n, n)
    rhs = np.zeros(n)
    dofs_list, gram_list, bmat_list, load_list = [], [], [], []
    order = (
        list(range(formulation.n_elements)) if element_order is None else list(element_order)
    )

    for k in order:
        G = np.asarray(formulation.element_gram(k), dtype=float)
        B = np.asarray(formulation.element_bmat(k), dtype=float)
        ell = np.asarray(formulation.element_load(k), dtype=float)
        dofs = np.asarray(formulation.element_trial_dofs(k), dtype=np.int64)
        try:
            factor = la_core.SpdFactor(G)
        except la_core.NotSPD as exc:
            raise la_core.NotSPD(f"element {k}: {exc}") from exc
        GinvB = factor.solve(B)
        A_K = B.T @ GinvB
        A_K = 0.5 * (A_K + A_K.T)
        trip.add_block(dofs, dofs, A_K)
        np.add.at(rhs, dofs, GinvB.T @ ell)
        if keep_element_data:
            dofs_list.append(dofs)
            gram_list.append(G)
            bmat_list.append(B)
            load_list.append(ell)

    if keep_element_data:
        # element data is keyed by element id, not visit order
        if element_order is not None:
            perm = np.argsort(np.asarray(order))
            dofs_list = [dofs_list[i] for i in perm]
            gram_list = [gram_list[i] for i in perm]
            bmat_list = [bmat_list[i] for i in perm]
            load_list = [load_list[i] for i in perm]
    else:
        dofs_list = gram_list = bmat_list = load_list = None
    return DpgSystem(
        A=trip.tocsr(),
        rhs=rhs,
        n_trial=n,
        element_dofs=dofs_list,
        element_gram=gram_list,
        element_bmat=bmat_list,
        element_load=load_list,
        formulation=formulation,
    )


def solve(system):
    """Solve the normal equations and recover the error estimator locally.

    eps_K = G_K^-1 (l_K - B_K x|_K) and eta_K = ||eps_K||_{Y(K)}; the global
    estimate is the root sum of squares of the element norms.
    """
    x = la_core.solve_sparse_spd(system.A, system.rhs)
    if not system.has_element_data:
        return DpgSolution(x=x, eps=None, eta_K=None, eta=None)
    eps_list = []
    eta2 = np.empty(len(system.element_gram))
    for k, (dofs, G, B, ell) in enumerate(
        zip(system.element_dofs, system.element_gram, system.element_bmat, system.element_load)
    ):
        resid = ell - B @ x[dofs]
        eps_K = la_core.SpdFactor(G).solve(resid)
        eps_list.append(eps_K)
        eta2[k] = max(eps_K @ resid, 0.0)
    eta_K = np.sqrt(eta2)
    return DpgSolution(x=x, eps=eps_list, eta_K=eta_K, eta=float(np.sqrt(eta2.sum())))


def estimator_localize(solution):
    """Per-element estimator norms; requires the solve to have kept element data."""
    if solution.eta_K is None:
        raise MissingElementData("system was assembled without element data")
    return solution.eta_K


def energy_norm(system, z):
    """Discrete energy norm ||T^r z||_Y evaluated through the local solves.

    Agrees with sqrt(z^T A z) up to roundoff; both paths are exercised by the
    tests.
    """
    if not system.has_element_data:
        raise MissingElementData("system was assembled without element data")
    z = np.asarray(z, dtype=float)
    total = 0.0
    for dofs, G, B in zip(system.element_dofs, system.element_gram, system.element_bmat):
        t = trial_to_test(G, B) @ z[dofs]
        total += t @ (G @ t)
    return float(np.sqrt(max(total, 0.0)))


# ---------------------------------------------------------------------------
# mixed (saddle) path, kept as a cross-validation oracle
# ---------------------------------------------------------------------------


def assemble_mixed(formulation):
    """Global block-diagonal Gram M, stacked trial-test B and load l.

    Test dofs are numbered element by element, in element-id order.
    """
    n = formulation.n_trial
    grams, brows, loads = [], [], []
    offset = 0
    for k in range(formulation.n_elements):
        G = np.asarray(formulation.element_gram(k), dtype=float)
        B = np.asarray(formulation.element_bmat(k), dtype=float)
        ell = np.asarray(formulation.element_load(k), dtype=float)
        dofs = np.asarray(formulation.element_trial_dofs(k), dtype=np.int64)
        grams.append(scipy.sparse.csr_matrix(G))
        rows = la_core.TripletMatrix(G.shape[0], n)
        rows.add_block(np.arange(G.shape[0]), dofs, B)
        brows.append(rows.tocsr())
        loads.append(ell)
        offset += G.shape[0]
    M = scipy.sparse.block_diag(grams, format="csr")
    B = scipy.sparse.vstack(brows, format="csr")
    return M, B, np.concatenate(loads)


def solve_mixed(formulation):
    """Solve the mixed formulation; returns (eps_global, x).

    Equivalent to the normal-equation path by the mixed-form equivalence;
    used to cross-check it.
    """
    M, B, ell = assemble_mixed(formulation)
    return la_core.solve_saddle(M, B, ell, np.zeros(formulation.n_trial))


# ---------------------------------------------------------------------------
# residual checks and diagnostics
# ---------------------------------------------------------------------------


def orthogonality_residuals(system, solution):
    """Residual norms of the two discrete orthogonality identities.

    Returns a dict with ``galerkin`` = ||b(e_j, eps)||_2 (should vanish),
    ``test_space`` = ||(eps, T^r e_j)_Y||_2 computed through the local
    trial-to-test solves, and ``scale`` = the global load norm.
    """
    if solution.eps is None:
        raise MissingElementData("estimator coefficients were not recovered")
    n = system.n_trial
    galerkin = np.zeros(n)
    test_space = np.zeros(n)
    load2 = 0.0
    for dofs, G, B, ell, eps_K in zip(
        system.element_dofs,
        system.element_gram,
        system.element_bmat,
        system.element_load,
        solution.eps,
    ):
        np.add.at(galerkin, dofs, B.T @ eps_K)
        T = trial_to_test(G, B)
        np.add.at(test_space, dofs, T.T @ (G @ eps_K))
        load2 += ell @ ell
    return {
        "galerkin": float(np.linalg.norm(galerkin)),
        "test_space": float(np.linalg.norm(test_space)),
        "scale": float(np.sqrt(load2)),
    }


def infsup_surrogate(formulation, system=None, tol=1e-10, maxit=500):
    """Smallest value of the discrete energy norm over unit X-norm trial vectors.

    Computed as the square root of the smallest generalized eigenvalue of
    (A, S) with S = the formulation's X-norm Gram, by inverse power
    iteration.  A stability diagnostic: the X-norm uses a computable
    surrogate for trace components, so this is not a statement about the
    exact inf-sup constant.
    """
    if system is None:
        system = assemble_normal(formulation, keep_element_data=False)
    S = formulation.xnorm_gram()
    lam = la_core.smallest_generalized_eig(system.A, S, tol=tol, maxit=maxit)
    return float(np.sqrt(max(lam, 0.0)))
