"""Dense and sparse linear algebra kernels for the DPG solver.

Element Gram matrices are SPD by construction, so the dense path is an
unpivoted Cholesky (LAPACK ``potrf``): an indefinite matrix signals an
assembly bug and is reported as :class:`NotSPD` instead of being pivoted
around.  The global normal-equation solve and the mixed saddle-point solve
are backed by SuperLU through ``scipy.sparse``; the contract is the residual
tolerance, not the factorization algorithm.
"""

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import DpgkitError

# Relative asymmetry allowed before a matrix is rejected as non-symmetric.
SYMMETRY_RTOL = 1e-12
# Relative residual contracts for the sparse solves.
SPARSE_RTOL = 1e-9
SADDLE_RTOL = 1e-8


class LinAlgFailure(DpgkitError):
    """Base class for solver failures in this module."""


class DimensionMismatch(LinAlgFailure):
    pass


class NotSPD(LinAlgFailure):
    """Matrix failed a symmetry check or produced a nonpositive pivot."""


class SingularMatrix(LinAlgFailure):
    pass


class RankDeficientB(LinAlgFailure):
    pass


class NonConvergence(LinAlgFailure):
    pass


def _as_dense(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    return A


def _check_symmetric_dense(A):
    scale = np.abs(A).max() if A.size else 0.0
    if scale == 0.0:
        return
    if np.abs(A - A.T).max() > SYMMETRY_RTOL * scale:
        raise NotSPD("matrix is not symmetric within 1e-12 relative")


class SpdFactor:
    """Cholesky factorization of a dense SPD matrix, reusable for many solves."""

    def __init__(self, A):
        A = _as_dense(A)
        _check_symmetric_dense(A)
        try:
            self._c_and_lower = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NotSPD(f"Cholesky failed: {exc}") from exc
        self.shape = A.shape

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise DimensionMismatch(
                f"rhs has leading dimension {b.shape[0]}, matrix is {self.shape[0]}"
            )
        return scipy.linalg.cho_solve(self._c_and_lower, b, check_finite=False)


def solve_spd_dense(A, rhs):
    """Solve ``A x = rhs`` for dense SPD ``A`` by unpivoted Cholesky.

    Raises :class:`NotSPD` on asymmetry or a nonpositive pivot and
    :class:`DimensionMismatch` on incompatible shapes; never returns
    silent garbage.
    """
    return SpdFactor(A).solve(rhs)


class TripletMatrix:
    """Duplicate-summing triplet accumulator with deterministic compression.

    Duplicates of the same ``(i, j)`` entry are summed in value-sorted order,
    so the compressed matrix is bitwise independent of insertion order.
    """

    def __init__(self, rows, cols):
        if rows < 0 or cols < 0:
            raise DimensionMismatch("negative matrix dimensions")
        self.rows = rows
        self.cols = cols
        self._i = []
        self._j = []
        self._v = []

    def add(self, i, j, value):
        self._i.append(i)
        self._j.append(j)
        self._v.append(value)

    def add_block(self, row_idx, col_idx, block):
        """Scatter a dense ``block`` at the outer product of index arrays."""
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        block = np.asarray(block, dtype=float)
        if block.shape != (row_idx.size, col_idx.size):
            raise DimensionMismatch("block shape does not match index arrays")
        ii = np.repeat(row_idx, col_idx.size)
        jj = np.tile(col_idx, row_idx.size)
        self._i.extend(ii.tolist())
        self._j.extend(jj.tolist())
        self._v.extend(block.ravel().tolist())

    def tocsr(self):
        i = np.asarray(self._i, dtype=np.int64)
        j = np.asarray(self._j, dtype=np.int64)
        v = np.asarray(self._v, dtype=float)
        return compress_triplets(i, j, v, (self.rows, self.cols))


def compress_triplets(i, j, v, shape):
    """Compress COO triplets to CSR, summing duplicates deterministically.

    Duplicates are ordered by value before summation, which makes the result
    independent of the order in which entries were generated.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    v = np.asarray(v, dtype=float)
    if i.size:
        if i.min() < 0 or i.max() >= shape[0] or j.min() < 0 or j.max() >= shape[1]:
            raise DimensionMismatch("triplet index out of range")
    order = np.lexsort((v, j, i))
    i, j, v = i[order], j[order], v[order]
    A = scipy.sparse.csr_matrix((v, (i, j)), shape=shape)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _as_csr(A):
    if isinstance(A, TripletMatrix):
        A = A.tocsr()
    if not scipy.sparse.issparse(A):
        raise DimensionMismatch("expected a sparse matrix or TripletMatrix")
    A = A.tocsr()
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    return A


def _check_symmetric_sparse(A):
    scale = np.abs(A.data).max() if A.nnz else 0.0
    if scale == 0.0:
        return
    asym = np.abs((A - A.T)).max()
    if asym > SYMMETRY_RTOL * scale:
        raise NotSPD("sparse matrix is not symmetric within 1e-12 relative")


def solve_sparse_spd(A, rhs):
    """Solve ``A x = rhs`` for sparse SPD ``A`` to relative residual 1e-9.

    Backed by a direct sparse factorization; deterministic for fixed input.
    """
    A = _as_csr(A)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != A.shape[0]:
        raise DimensionMismatch("rhs length does not match matrix")
    _check_symmetric_sparse(A)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise NotSPD("nonpositive diagonal entry; matrix cannot be SPD")
    try:
        lu = scipy.sparse.linalg.splu(A.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularMatrix(f"sparse factorization failed: {exc}") from exc
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0.0:
        rel = np.linalg.norm(A @ x - rhs) / rhs_norm
        if not np.isfinite(rel) or rel > SPARSE_RTOL:
            raise SingularMatrix(f"relative residual {rel:.3e} exceeds {SPARSE_RTOL:.1e}")
    return x


def solve_saddle(M, B, rhs_top, rhs_bottom):
    """Solve the mixed system ``[[M, B], [B^T, 0]] (eps, x) = (rhs_top, rhs_bottom)``.

    ``M`` must be SPD (block-diagonal Gram in the DPG setting) and ``B`` must
    have full column rank.  Returns ``(eps, x)`` with block residuals below
    1e-8 relative, equivalent to the Schur elimination
    ``x = (B^T M^-1 B)^-1 (B^T M^-1 rhs_top - rhs_bottom)``.
    """
    M = _as_csr(M)
    if isinstance(B, TripletMatrix):
        B = B.tocsr()
    if not scipy.sparse.issparse(B):
        B = scipy.sparse.csr_matrix(np.asarray(B, dtype=float))
    B = B.tocsr()
    ny, nx = B.shape
    if M.shape[0] != ny:
        raise DimensionMismatch("M and B have incompatible shapes")
    rhs_top = np.asarray(rhs_top, dtype=float)
    rhs_bottom = np.asarray(rhs_bottom, dtype=float)
    if rhs_top.shape[0] != ny or rhs_bottom.shape[0] != nx:
        raise DimensionMismatch("rhs blocks do not match system dimensions")
    _check_symmetric_sparse(M)
    if np.any(M.diagonal() <= 0.0):
        raise NotSPD("M has a nonpositive diagonal entry")

    K = scipy.sparse.bmat([[M, B], [B.T, None]], format="csc")
    rhs = np.concatenate([rhs_top, rhs_bottom])
    try:
        sol = scipy.sparse.linalg.splu(K).solve(rhs)
    except RuntimeError as exc:
        raise RankDeficientB(f"saddle factorization failed: {exc}") from exc
    eps, x = sol[:ny], sol[ny:]

    scale = np.linalg.norm(rhs_top) + np.linalg.norm(rhs_bottom)
    if scale == 0.0:
        scale = 1.0
    res_top = np.linalg.norm(M @ eps + B @ x - rhs_top)
    res_bot = np.linalg.norm(B.T @ eps - rhs_bottom)
    rel = (res_top + res_bot) / scale
    if not np.isfinite(rel) or rel > SADDLE_RTOL:
        raise RankDeficientB(f"saddle residual {rel:.3e} exceeds {SADDLE_RTOL:.1e}")
    return eps, x


def smallest_generalized_eig(A, S, tol=1e-10, maxit=500):
    """Smallest eigenvalue of ``A v = lam S v`` by inverse power iteration.

    ``A`` and ``S`` are SPD.  Iterates ``v <- A^-1 S v`` with a deterministic
    start vector and returns the converged Rayleigh quotient.  Raises
    :class:`NonConvergence` if the quotient has not settled after ``maxit``
    iterations.
    """
    A = _as_csr(A)
    S = _as_csr(S)
    if A.shape != S.shape:
        raise DimensionMismatch("pencil matrices have different shapes")
    n = A.shape[0]
    try:
        lu = scipy.sparse.linalg.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularMatrix(f"factorization of A failed: {exc}") from exc

    # Deterministic, generic start vector (constant plus a ramp).
    v = np.ones(n) + np.arange(n) / max(n, 1)
    v /= np.sqrt(v @ (S @ v))
    lam_old = np.inf
    delta = np.inf
    for _ in range(maxit):
        v = lu.solve(S @ v)
        v /= np.sqrt(v @ (S @ v))
        lam = (v @ (A @ v)) / (v @ (S @ v))
        delta = abs(lam - lam_old)
        if delta <= tol * abs(lam):
            return lam
        lam_old = lam
    if delta <= 1e-6 * abs(lam):
        return lam
    raise NonConvergence(f"power iteration did not settle in {maxit} iterations")
