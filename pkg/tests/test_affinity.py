import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dscnet.affinity import affinity_lowrank, affinity_plain, solve_lsr, threshold_columns
from dscnet.evaluation import SynthSpec, synth_subspaces
from dscnet.exceptions import ConfigError, NumericalError, ShapeError

finite = st.floats(-10, 10, allow_nan=False)


def test_plain_examples():
    np.testing.assert_array_equal(affinity_plain([[0, 1], [0, 0]]), [[0, 1], [1, 0]])
    C = np.array([[0.0, 2.0, 1.0], [2.0, 0.0, 0.5], [1.0, 0.5, 3.0]])
    np.testing.assert_array_equal(affinity_plain(C), 2 * C)
    with pytest.raises(ShapeError):
        affinity_plain(np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=finite))
def test_plain_symmetric_nonnegative(C):
    A = affinity_plain(C)
    assert np.array_equal(A, A.T)
    assert np.all(A >= 0)


def test_lowrank_two_orthogonal_blocks():
    u = np.array([1.0, 2.0, 2.0]) / 3
    v = np.array([3.0, 4.0]) / 5
    C = np.zeros((5, 5))
    C[:3, :3] = 2.0 * np.outer(u, u)
    C[3:, 3:] = 1.0 * np.outer(v, v)
    A = affinity_lowrank(C, 2, 1)
    assert np.abs(A[:3, 3:]).max() <= 1e-10
    assert np.abs(A[3:, :3]).max() <= 1e-10
    assert np.all(A[:3, :3][~np.eye(3, dtype=bool)] > 0.99)


def test_lowrank_psd_entries_in_unit_interval(rng):
    B = rng.standard_normal((12, 4))
    A = affinity_lowrank(B @ B.T, 2, 2)
    assert np.all((A >= 0) & (A <= 1 + 1e-12))
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)


def test_lowrank_no_truncation_when_rank_equals_n(rng):
    C = rng.standard_normal((7, 7))
    A = affinity_lowrank(C, 2, 3)  # r = 7 = N
    U, s, _ = np.linalg.svd(0.5 * (C + C.T))
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    expected = np.abs(U @ U.T)
    np.fill_diagonal(expected, 0)
    np.testing.assert_allclose(A, expected, atol=1e-10)


def test_lowrank_alpha_power(rng):
    C = rng.standard_normal((9, 9))
    A1 = affinity_lowrank(C, 2, 2, alpha=1.0)
    A3 = affinity_lowrank(C, 2, 2, alpha=3.0)
    np.testing.assert_allclose(A3, A1**3, atol=1e-12)


def test_lowrank_rank_too_large():
    with pytest.raises(ConfigError):
        affinity_lowrank(np.eye(6), 2, 3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 8), elements=finite), st.floats(0.5, 4))
def test_lowrank_symmetric_nonnegative(C, alpha):
    A = affinity_lowrank(C, 2, 2, alpha=alpha)
    assert np.array_equal(A, A.T)
    assert np.all(A >= 0)


def test_threshold_examples():
    C = np.array([[3.0, 0.0], [1.0, 0.0], [0.5, 0.0]])
    np.testing.assert_array_equal(threshold_columns(C, 1.0), C)
    # 0.7 * 4.5 = 3.15 > 3, so the second entry is needed as well
    np.testing.assert_array_equal(threshold_columns(C, 0.7)[:, 0], [3.0, 1.0, 0.0])
    np.testing.assert_array_equal(threshold_columns(C, 0.6)[:, 0], [3.0, 0.0, 0.0])
    np.testing.assert_array_equal(threshold_columns(C, 0.7)[:, 1], 0.0)
    with pytest.raises(ConfigError):
        threshold_columns(C, 0.0)


def test_threshold_uses_magnitude_and_keeps_sign():
    C = np.array([[-3.0], [1.0], [0.5]])
    np.testing.assert_array_equal(threshold_columns(C, 0.6), [[-3.0], [0.0], [0.0]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 4), elements=finite), st.floats(0.05, 1.0))
def test_threshold_keeps_enough_mass(C, rho):
    T = threshold_columns(C, rho)
    kept = np.abs(T).sum(0)
    total = np.abs(C).sum(0)
    assert np.all(kept >= rho * total * (1 - 1e-12))
    assert np.all((T == C) | (T == 0))


def _brute_force_zero_diag(Z, l1, l2):
    n = Z.shape[0]
    G = Z @ Z.T
    C = np.zeros((n, n))
    for i in range(n):
        rest = [j for j in range(n) if j != i]
        M = 2 * l1 * np.eye(n - 1) + l2 * G[np.ix_(rest, rest)]
        C[i, rest] = np.linalg.solve(M, l2 * G[rest, i])
    return C


def _objective(C, Z, l1, l2):
    return l1 * np.sum(C**2) + 0.5 * l2 * np.sum((Z - C @ Z) ** 2)


def test_solve_lsr_stationary(rng):
    Z = rng.standard_normal((10, 4))
    C = solve_lsr(Z, 0.3, 2.0)
    grad = 2 * 0.3 * C - 2.0 * (Z - C @ Z) @ Z.T
    assert np.abs(grad).max() <= 1e-10
    assert np.allclose(C, C.T, atol=1e-14)
    for _ in range(5):
        P = rng.standard_normal(C.shape) * 1e-3
        assert _objective(C + P, Z, 0.3, 2.0) > _objective(C, Z, 0.3, 2.0)


@pytest.mark.parametrize("n,d", [(6, 3), (9, 12), (15, 5)])
def test_solve_lsr_zero_diag_matches_per_sample_solve(n, d, rng):
    Z = rng.standard_normal((n, d))
    C = solve_lsr(Z, 0.5, 3.0, zero_diag=True)
    expected = _brute_force_zero_diag(Z, 0.5, 3.0)
    np.testing.assert_allclose(C, expected, atol=1e-10, rtol=1e-9)
    assert np.all(np.diag(C) == 0)


def test_solve_lsr_lambda2_zero():
    assert not solve_lsr(np.ones((4, 2)), 1.0, 0.0).any()


def test_solve_lsr_orthonormal_rows_limit(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((8, 5)))
    Z = Q.T  # 5 orthonormal rows
    C = solve_lsr(Z, 1e-10, 1.0)
    assert np.linalg.norm(Z - C @ Z) <= 1e-8


def test_solve_lsr_duplicated_points():
    z = np.array([[0.6, 0.8, 0.0]])
    Z = np.concatenate([z, z])
    for l1, tol in [(1e-2, 0.05), (1e-6, 1e-5)]:
        C = solve_lsr(Z, l1, 1.0, zero_diag=True)
        assert C[0, 0] == 0 and C[1, 1] == 0
        assert C[0, 1] == pytest.approx(C[1, 0], rel=1e-12)
        assert abs(1 - C[0, 1]) <= tol
        assert C[0, 1] == pytest.approx(1.0 / (1.0 + 2 * l1), rel=1e-10)


def test_solve_lsr_errors():
    with pytest.raises(ConfigError):
        solve_lsr(np.ones(3), 1, 1)
    with pytest.raises(ConfigError):
        solve_lsr(np.ones((3, 2)), -1, 1)
    with pytest.raises(ConfigError):
        solve_lsr(np.ones((3, 2)), 0, 0)
    with pytest.raises(NumericalError):
        solve_lsr(np.ones((3, 2)), 0.0, 1.0)  # rank-one Gram, no ridge


def test_block_diagonal_recovery():
    data = synth_subspaces(SynthSpec(4, 30, 3, 15, normalize="none", seed=1))
    same = data.labels[:, None] == data.labels[None, :]
    ratios = []
    for l1 in (1e-6, 1e-7):
        C = solve_lsr(data.X, l1, 1.0)
        ratios.append(np.abs(C[~same]).sum() / np.abs(C[same]).sum())
    # cross-subspace leakage shrinks linearly with the ridge weight
    assert ratios[1] <= 1e-6
    assert ratios[1] == pytest.approx(ratios[0] / 10, rel=0.1)


def test_shared_basis_negative_control():
    spec = SynthSpec(2, 20, 3, 10, normalize="none", seed=4)
    data = synth_subspaces(spec)
    # project the second group onto the first basis: one subspace in total
    B = data.bases[0]
    X = data.X.copy()
    X[10:] = X[10:] @ data.bases[1] @ B.T
    C = solve_lsr(X, 1e-6, 1.0)
    same = data.labels[:, None] == data.labels[None, :]
    assert np.abs(C[~same]).sum() > 0.1 * np.abs(C[same]).sum()
