"""From self-expressive coefficients to a spectral-clustering affinity.

Also provides :func:`solve_lsr`, the closed-form minimiser of the
least-squares (Frobenius) self-expression problem. It is what the network's
coefficient objective reduces to when the auto-encoder is frozen, which makes
it the reference for checking training.
"""

import numpy as np
import scipy.linalg

from ._validation import check_square
from .diffcore import svd
from .exceptions import ConfigError, NumericalError

# Singular values below this fraction of the largest are treated as zero.
RANK_TOL = 1e-12


def affinity_plain(C):
    """``A = |C| + |C^T|``."""
    C = check_square(C, "coefficient matrix")
    A = np.abs(C)
    return A + A.T


def affinity_lowrank(C, n_clusters, subspace_dim, alpha=1.0):
    """Affinity from the leading singular subspace of the symmetrised ``C``.

    Keeps the top ``r = n_clusters * subspace_dim + 1`` singular vectors
    (dropping numerically null ones), normalises each row of ``U_r`` to unit
    length and returns ``|U_r U_r^T| ** alpha`` with a zero diagonal.

    Raises
    ------
    ConfigError
        If ``r`` exceeds the number of samples.
    """
    C = check_square(C, "coefficient matrix")
    n = C.shape[0]
    r = int(n_clusters) * int(subspace_dim) + 1
    if r > n:
        raise ConfigError(f"rank K*d+1 = {r} exceeds the number of samples {n}")
    U, s, _ = svd(0.5 * (C + C.T))
    keep = min(r, int(np.count_nonzero(s > RANK_TOL * s[0]))) if s[0] > 0 else 0
    U = U[:, :keep]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)
    A = np.abs(U @ U.T) ** alpha
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 0.0)
    return A


def threshold_columns(C, rho):
    """Sparsify each column of ``C`` to its dominant entries.

    Per column, entries are kept in order of decreasing magnitude until their
    cumulative absolute mass first reaches ``rho`` times the column's L1 norm;
    the rest are zeroed. ``rho = 1`` returns ``C`` unchanged.
    """
    if not 0 < rho <= 1:
        raise ConfigError(f"rho must lie in (0, 1], got {rho}")
    C = np.array(C, dtype=np.float64)
    if rho == 1:
        return C
    mag = np.abs(C)
    order = np.argsort(-mag, axis=0, kind="stable")
    sorted_mag = np.take_along_axis(mag, order, axis=0)
    cum = np.cumsum(sorted_mag, axis=0)
    target = rho * cum[-1]
    # count of leading entries needed to reach the target mass
    n_keep = np.argmax(cum >= target[None, :], axis=0) + 1
    keep_sorted = np.arange(C.shape[0])[:, None] < n_keep[None, :]
    mask = np.zeros_like(keep_sorted)
    np.put_along_axis(mask, order, keep_sorted, axis=0)
    return np.where(mask, C, 0.0)


def solve_lsr(Z, lambda1, lambda2, zero_diag=False):
    """Closed-form coefficients for ``lambda1 ||C||_F^2 + lambda2/2 ||Z - C Z||_F^2``.

    Parameters
    ----------
    Z : array-like, shape (N, d)
        One sample per row.
    lambda1, lambda2 : float
    zero_diag : bool
        Additionally constrain ``diag(C) = 0``. Each sample's coefficients are
        then the unconstrained optimum with its own entry eliminated, which in
        closed form is ``C = I - diag(1 / diag(P)) P`` with
        ``P = (2 lambda1 I + lambda2 G)^{-1}`` and ``G = Z Z^T``.

    Returns
    -------
    C : ndarray, shape (N, N)
        Row ``i`` reconstructs sample ``i``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ConfigError(f"Z must be a matrix, got shape {Z.shape}")
    if lambda1 < 0 or lambda2 < 0 or (lambda1 == 0 and lambda2 == 0):
        raise ConfigError("need lambda1 > 0 or lambda2 > 0, both nonnegative")
    n = Z.shape[0]
    if lambda2 == 0:
        return np.zeros((n, n))
    G = Z @ Z.T
    M = 2.0 * lambda1 * np.eye(n) + lambda2 * G
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise NumericalError(f"self-expression system is singular (condition number {cond:.3g})")
    try:
        if zero_diag:
            P = scipy.linalg.inv(M, check_finite=True)
            if np.any(np.abs(np.diag(P)) < np.finfo(float).tiny):
                raise np.linalg.LinAlgError("degenerate inverse diagonal")
            C = np.eye(n) - P / np.diag(P)[:, None]
            np.fill_diagonal(C, 0.0)
        else:
            C = scipy.linalg.solve(M, lambda2 * G, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"self-expression system is singular: {exc}") from exc
    return 0.5 * (C + C.T) if not zero_diag else C
