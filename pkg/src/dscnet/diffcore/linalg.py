"""Dense symmetric eigensolver and thin SVD."""

import math

import numpy as np

from ..exceptions import NumericalError, ShapeError
from .ops import as_tensor

# Above this size the pure-Python QL sweep gets slow; LAPACK takes over.
QL_MAX_SIZE = 300
SYMMETRY_TOL = 1e-10


def _check_symmetric(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise NumericalError("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def tridiagonalize(a):
    """Householder reduction ``a = Q T Q^T``.

    Returns the diagonal ``d``, the sub-diagonal ``e`` (length n-1) and the
    orthogonal ``Q``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1 :, k]
        tail = np.linalg.norm(x[1:])
        if tail == 0.0:
            continue
        alpha = -math.copysign(math.hypot(x[0], tail), x[0])
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        b = a[k + 1 :, k + 1 :]
        p = b @ v
        w = 2.0 * p - 2.0 * (v @ p) * v
        a[k + 1 :, k + 1 :] = b - np.outer(v, w) - np.outer(w, v)
        a[k + 1 :, k] = 0.0
        a[k, k + 1 :] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
        qs = q[:, k + 1 :]
        q[:, k + 1 :] = qs - 2.0 * np.outer(qs @ v, v)
    return np.diag(a).copy(), np.diag(a, -1).copy(), q


def tridiagonal_ql(d, e, z, max_iter=60):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``z`` holds the basis to rotate as *rows* and is updated in place, so
    passing ``Q.T`` from :func:`tridiagonalize` yields eigenvectors of the
    original matrix. Returns the (unsorted) eigenvalues.
    """
    d = np.array(d, dtype=np.float64)
    n = d.size
    e = np.append(np.asarray(e, dtype=np.float64), 0.0)
    eps = np.finfo(np.float64).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise NumericalError("tridiagonal QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[i].copy()
                z[i] = c * zi - s * z[i + 1]
                z[i + 1] = s * zi + c * z[i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d


def sym_eig(a, method="auto"):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    a : array-like, shape (n, n)
        Symmetric up to 1e-10 relative asymmetry; symmetrized before use.
    method : {"auto", "ql", "lapack"}
        ``"ql"`` runs Householder tridiagonalization followed by implicit QL;
        ``"lapack"`` defers to :func:`numpy.linalg.eigh`. ``"auto"`` picks QL
        for n <= 300.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns.
    """
    a = _check_symmetric(as_tensor(a))
    if method == "auto":
        method = "ql" if a.shape[0] <= QL_MAX_SIZE else "lapack"
    if method == "lapack":
        w, v = np.linalg.eigh(a)
        return w, np.ascontiguousarray(v)
    if method != "ql":
        raise ValueError(f"unknown eigensolver {method!r}")
    d, e, q = tridiagonalize(a)
    z = np.ascontiguousarray(q.T)
    w = tridiagonal_ql(d, e, z)
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(z[order].T)


def svd(a):
    """Thin SVD ``a = U diag(s) V^T`` with ``s`` descending."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"svd expects a matrix, got shape {a.shape}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, np.ascontiguousarray(vt.T)
