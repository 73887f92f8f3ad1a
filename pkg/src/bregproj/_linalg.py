"""Shared dense linear-algebra helpers with a uniform rank threshold.

Singular values (or eigenvalues of PSD matrices) at or below
``max(shape) * largest * eps`` are treated as zero everywhere in the
package, so pseudoinverses, range bases, and smallest-positive-eigenvalue
computations are mutually consistent.
"""

from __future__ import annotations

import numpy as np

EPS = float(np.finfo(np.float64).eps)

__all__ = [
    "rank_threshold",
    "pinv",
    "orth_basis",
    "null_basis",
    "smallest_positive_eigenvalue",
    "sym_sqrt",
    "solve_psd",
    "gram",
    "operator_norm",
]


def rank_threshold(sigma_max: float, shape: tuple[int, int]) -> float:
    """Zero cutoff for singular/eigen values of a matrix with this shape."""
    return max(shape) * sigma_max * EPS


def pinv(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the package rank threshold."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return M.T.copy()
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    thr = rank_threshold(s[0], M.shape)
    inv = np.where(s > thr, 1.0 / np.where(s > thr, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def orth_basis(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis of range(M), one column per direction."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    thr = rank_threshold(s[0], M.shape)
    return u[:, s > thr]


def null_basis(S: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the kernel of a symmetric matrix."""
    S = np.asarray(S, dtype=float)
    w, v = np.linalg.eigh(0.5 * (S + S.T))
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    if amax == 0.0:
        return np.eye(S.shape[0])
    thr = rank_threshold(amax, S.shape)
    return v[:, np.abs(w) <= thr]


def smallest_positive_eigenvalue(S: np.ndarray) -> float:
    """Smallest eigenvalue above the zero threshold of a symmetric PSD matrix.

    Returns 0.0 when the matrix is numerically zero.
    """
    S = np.asarray(S, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    if amax == 0.0:
        return 0.0
    thr = rank_threshold(amax, S.shape)
    positive = w[w > thr]
    return float(positive.min()) if positive.size else 0.0


def sym_sqrt(S: np.ndarray) -> np.ndarray:
    """PSD square root of a symmetric matrix; roundoff negatives clamp to 0."""
    S = np.asarray(S, dtype=float)
    w, v = np.linalg.eigh(0.5 * (S + S.T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def solve_psd(H: np.ndarray, g: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Solve H s = g for symmetric PSD H via Cholesky.

    Falls back to Tikhonov-jittered factorizations when H is rank deficient,
    starting from `jitter` and escalating; all dual minimizers of the
    projection problem produce the same primal point, so the jitter only
    selects among them.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    m = H.shape[0]
    base = jitter if jitter > 0 else 1e-12 * (np.trace(H) / max(m, 1) + 1.0)
    shift = 0.0
    for _ in range(8):
        try:
            L = np.linalg.cholesky(H + shift * np.eye(m))
        except np.linalg.LinAlgError:
            shift = base if shift == 0.0 else shift * 100.0
            continue
        z = np.linalg.solve(L, g)
        return np.linalg.solve(L.T, z)
    raise np.linalg.LinAlgError("matrix not factorizable even with jitter")


def gram(G: np.ndarray, A: np.ndarray) -> np.ndarray:
    """A G A^T for G given either as a diagonal vector or a dense matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        return (A * G) @ A.T
    return A @ G @ A.T


def operator_norm(M: np.ndarray) -> float:
    """Largest singular value."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])
