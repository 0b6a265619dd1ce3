import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.linalg

from dpgkit import la_core


def test_solve_spd_identity():
    x = la_core.solve_spd_dense(np.eye(3), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(x, [1.0, 2.0, 3.0], atol=1e-14)


def test_solve_spd_2x2():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    x = la_core.solve_spd_dense(A, np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-14)


def test_solve_spd_random_construct_then_solve():
    rng = np.random.default_rng(7)
    R = rng.standard_normal((20, 20))
    A = R.T @ R + np.eye(20)
    x_star = rng.standard_normal(20)
    x = la_core.solve_spd_dense(A, A @ x_star)
    assert np.abs(x - x_star).max() < 1e-8


def test_solve_spd_residual_contract():
    rng = np.random.default_rng(3)
    R = rng.standard_normal((30, 30))
    A = R.T @ R + np.eye(30)
    rhs = rng.standard_normal(30)
    x = la_core.solve_spd_dense(A, rhs)
    bound = 1e-10 * (np.linalg.norm(A, "fro") * np.linalg.norm(x) + np.linalg.norm(rhs))
    assert np.linalg.norm(A @ x - rhs) <= bound


def test_solve_spd_rejects_indefinite():
    with pytest.raises(la_core.NotSPD):
        la_core.solve_spd_dense(np.diag([1.0, -1.0]), np.ones(2))


def test_solve_spd_rejects_asymmetric():
    with pytest.raises(la_core.NotSPD):
        la_core.solve_spd_dense(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))


def test_solve_spd_dimension_mismatch():
    with pytest.raises(la_core.DimensionMismatch):
        la_core.solve_spd_dense(np.eye(3), np.ones(2))
    with pytest.raises(la_core.DimensionMismatch):
        la_core.solve_spd_dense(np.ones((2, 3)), np.ones(2))


def _fem_tridiag(n):
    h = 1.0 / n
    main = 2.0 * np.ones(n - 1) / h
    off = -np.ones(n - 2) / h
    return scipy.sparse.diags([off, main, off], [-1, 0, 1]).tocsr()


def test_sparse_spd_matches_dense():
    A = _fem_tridiag(50)
    rhs = np.full(A.shape[0], 1.0 / 50)  # load for f = 1
    x = la_core.solve_sparse_spd(A, rhs)
    x_dense = np.linalg.solve(A.toarray(), rhs)
    assert np.linalg.norm(x - x_dense) / np.linalg.norm(x_dense) < 1e-9


def test_sparse_spd_diagonal():
    n = 17
    A = scipy.sparse.diags(np.arange(1.0, n + 1)).tocsr()
    x = la_core.solve_sparse_spd(A, np.ones(n))
    assert np.allclose(x, 1.0 / np.arange(1.0, n + 1), atol=1e-14)


def test_sparse_spd_relative_residual():
    A = _fem_tridiag(200)
    rng = np.random.default_rng(11)
    rhs = rng.standard_normal(A.shape[0])
    x = la_core.solve_sparse_spd(A, rhs)
    assert np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs) <= 1e-9


def test_sparse_spd_rejects_nonpositive_diagonal():
    A = scipy.sparse.diags([1.0, 0.0, 2.0]).tocsr()
    with pytest.raises(la_core.NotSPD):
        la_core.solve_sparse_spd(A, np.ones(3))


def test_triplet_compression_deterministic_under_permutation():
    rng = np.random.default_rng(5)
    n = 12
    entries = []
    for _ in range(300):
        entries.append((rng.integers(0, n), rng.integers(0, n), rng.standard_normal()))
    # make it symmetric positive definite by adding a strong diagonal
    for i in range(n):
        entries.append((i, i, 50.0))

    def build(order):
        t = la_core.TripletMatrix(n, n)
        for i, j, v in order:
            t.add(int(i), int(j), float(v))
            t.add(int(j), int(i), float(v))  # symmetrize entry by entry
        return t.tocsr()

    A1 = build(entries)
    perm = rng.permutation(len(entries))
    A2 = build([entries[k] for k in perm])
    assert (A1 != A2).nnz == 0
    assert np.array_equal(A1.data, A2.data)  # bitwise identical after compression

    x1 = la_core.solve_sparse_spd(A1, np.ones(n))
    x2 = la_core.solve_sparse_spd(A2, np.ones(n))
    assert np.array_equal(x1, x2)


def test_triplet_out_of_range():
    t = la_core.TripletMatrix(2, 2)
    t.add(2, 0, 1.0)
    with pytest.raises(la_core.DimensionMismatch):
        t.tocsr()


def test_saddle_unit_case():
    M = scipy.sparse.eye(3).tocsr()
    B = scipy.sparse.csr_matrix(np.array([[1.0], [0.0], [0.0]]))
    eps, x = la_core.solve_saddle(M, B, np.array([1.0, 0.0, 0.0]), np.zeros(1))
    assert np.allclose(x, [1.0], atol=1e-12)
    assert np.abs(eps).max() < 1e-12


def _random_saddle(seed, ny=40, nx=15):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((ny, ny))
    M = scipy.sparse.csr_matrix(R.T @ R + ny * np.eye(ny))
    B = scipy.sparse.csr_matrix(rng.standard_normal((ny, nx)))
    return M, B, rng


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_saddle_matches_schur_oracle(seed):
    M, B, rng = _random_saddle(seed)
    rhs_top = rng.standard_normal(M.shape[0])
    rhs_bottom = rng.standard_normal(B.shape[1])
    eps, x = la_core.solve_saddle(M, B, rhs_top, rhs_bottom)

    # independent Schur elimination: x = (B^T M^-1 B)^-1 (B^T M^-1 rhs_top - rhs_bottom)
    Minv = scipy.sparse.linalg.splu(M.tocsc())
    MinvB = Minv.solve(B.toarray())
    S = B.T @ MinvB
    x_schur = np.linalg.solve(S, B.T @ Minv.solve(rhs_top) - rhs_bottom)
    assert np.linalg.norm(x - x_schur) / np.linalg.norm(x_schur) < 1e-8


def test_saddle_consistent_data_zero_residual():
    M, B, rng = _random_saddle(9)
    x_star = rng.standard_normal(B.shape[1])
    eps, x = la_core.solve_saddle(M, B, B @ x_star, np.zeros(B.shape[1]))
    assert np.linalg.norm(x - x_star) < 1e-8
    assert np.abs(eps).max() < 1e-8


def test_saddle_rank_deficient_B():
    M = scipy.sparse.eye(4).tocsr()
    B = scipy.sparse.csr_matrix(np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(la_core.RankDeficientB):
        la_core.solve_saddle(M, B, np.ones(4), np.zeros(2))


def test_normal_matrix_spd_property():
    # A = B^T M^-1 B is symmetric and positive definite on random data
    M, B, rng = _random_saddle(21)
    Minv = scipy.sparse.linalg.splu(M.tocsc())
    A = B.T @ Minv.solve(B.toarray())
    scale = np.abs(A).max()
    assert np.abs(A - A.T).max() <= 1e-10 * scale
    for _ in range(100):
        z = rng.standard_normal(A.shape[0])
        assert z @ A @ z > 0.0


def test_smallest_generalized_eig_diagonal():
    A = scipy.sparse.diags([4.0, 9.0, 25.0]).tocsr()
    S = scipy.sparse.eye(3).tocsr()
    lam = la_core.smallest_generalized_eig(A, S)
    assert abs(lam - 4.0) < 1e-8
