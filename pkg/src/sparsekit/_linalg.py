"""Small dense linear-algebra helpers used across modules."""

import numpy as np


def complement_basis(kernel: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of a unit vector.

    Returns an (n, n-1) matrix U with orthonormal columns, every column
    orthogonal to ``kernel``. Built from a Householder reflection mapping
    e_0 onto the kernel direction, so the result is deterministic.
    """
    k = np.asarray(kernel, dtype=float)
    n = k.shape[0]
    k = k / np.linalg.norm(k)
    v = k.copy()
    v[0] -= np.sign(k[0]) if k[0] != 0 else 1.0
    nv = np.linalg.norm(v)
    if nv < 1e-300:
        # kernel is already +-e_0
        h = np.eye(n)
    else:
        v /= nv
        h = np.eye(n) - 2.0 * np.outer(v, v)
    # column 0 of h is parallel to k; the rest span its complement
    return h[:, 1:]


def ones_complement_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the subspace orthogonal to the all-ones vector."""
    return complement_basis(np.ones(n))


def pinv_sqrt(matrix: np.ndarray, kernel_cut: float = 1e-12):
    """Square root of the Moore-Penrose pseudo-inverse of a symmetric PSD matrix.

    Eigenvalues below ``kernel_cut`` times the largest eigenvalue are treated
    as kernel and mapped to zero. Returns (root, rank).
    """
    evals, evecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    lam_max = float(evals[-1]) if evals.size else 0.0
    keep = evals > kernel_cut * max(lam_max, 0.0)
    inv_root = np.zeros_like(evals)
    inv_root[keep] = 1.0 / np.sqrt(evals[keep])
    root = (evecs * inv_root) @ evecs.T
    return root, int(np.count_nonzero(keep))


def project_out(x: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Remove the component of x (vector or column block) along a unit vector."""
    d = direction
    if x.ndim == 1:
        return x - d * (d @ x)
    return x - np.outer(d, d @ x)
