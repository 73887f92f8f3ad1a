"""Independent brute-force references used by the test suite.

These share no code with the production projection paths (beyond the
generator definitions), so agreement with them is evidence rather than
tautology.  They favor clarity over speed and run only in tests and
example generation.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "quadratic_projection_oracle",
    "sphere_grid_minmax",
    "reference_sinkhorn",
    "constrained_entropy_oracle",
]


def quadratic_projection_oracle(B, A, b, x) -> np.ndarray:
    """Closed-form B-weighted projection of x onto {Az = b}:
    x - B^{-1} A^T (A B^{-1} A^T)^+ (Ax - b)."""
    B = np.asarray(B, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.asarray(x, dtype=float)
    BiAt = np.linalg.solve(B, A.T)
    M = A @ BiAt
    u, s, vt = np.linalg.svd(M)
    thr = max(M.shape) * (s[0] if s.size else 0.0) * np.finfo(float).eps
    inv = np.where(s > thr, 1.0 / np.where(s > thr, s, 1.0), 0.0)
    Mp = (vt.T * inv) @ u.T
    return x - BiAt @ (Mp @ (A @ x - b))


def sphere_grid_minmax(Q_list, basis, resolution: int = 200) -> float:
    """Grid minimum over the unit sphere of span(basis) of
    max_i ||Q_i v||^2; usable only for 1-, 2-, or 3-dimensional spans."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    r = basis.shape[1]
    if r == 0:
        raise ValueError("empty basis")
    if r > 3:
        raise ValueError("grid search supports span dimension <= 3 only")

    if r == 1:
        dirs = basis.T
    elif r == 2:
        theta = np.linspace(0.0, np.pi, resolution, endpoint=False)
        dirs = np.cos(theta)[:, None] * basis[:, 0] + np.sin(theta)[:, None] * basis[:, 1]
    else:
        theta = np.linspace(0.0, np.pi, resolution)
        phi = np.linspace(0.0, np.pi, resolution, endpoint=False)
        tt, pp = np.meshgrid(theta, phi)
        c = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1)
        dirs = c.reshape(-1, 3) @ basis.T

    best = np.inf
    for v in dirs:
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v = v / nv
        worst = max(float(np.sum((Q @ v) ** 2)) for Q in Q_list)
        best = min(best, worst)
    return best


def reference_sinkhorn(kernel, rho_row, rho_col, tol: float = 1e-12,
                       max_iterations: int = 10**6, first_axis: int = 0,
                       record: bool = False):
    """Classical two-marginal Sinkhorn scaling to the given tolerance.

    Maintains scaling vectors u, v with plan u[:, None] * K * v[None, :];
    each half-update (one marginal fixed) counts as one iterate.  Returns
    the final plan, or (plan, iterate list) when `record` is set.
    """
    K = np.asarray(kernel, dtype=float)
    r = np.asarray(rho_row, dtype=float)
    c = np.asarray(rho_col, dtype=float)
    u = np.ones(K.shape[0])
    v = np.ones(K.shape[1])

    def plan():
        return u[:, None] * K * v[None, :]

    def residual(P):
        return max(float(np.max(np.abs(P.sum(axis=1) - r))),
                   float(np.max(np.abs(P.sum(axis=0) - c))))

    history = [plan()] if record else None
    axis = first_axis
    for _ in range(max_iterations):
        P = plan()
        if residual(P) <= tol:
            return (P, history) if record else P
        if axis == 0:
            u = u * (r / P.sum(axis=1))
        else:
            v = v * (c / P.sum(axis=0))
        axis = 1 - axis
        if record:
            history.append(plan())
    P = plan()
    if residual(P) <= tol:
        return (P, history) if record else P
    raise RuntimeError("reference Sinkhorn hit its iteration cap")


def constrained_entropy_oracle(A, b, tol: float = 1e-10,
                               max_iterations: int = 500) -> np.ndarray:
    """argmin sum_i x_i log x_i - x_i subject to Ax = b, x > 0.

    Full-system dual Newton on psi(lam) = sum exp((A^T lam)) - <lam, b>,
    whose stationary points satisfy A exp(A^T lam) = b.  Independent of the
    production dual solver.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m = A.shape[0]
    lam = np.zeros(m)
    for _ in range(max_iterations):
        x = np.exp(A.T @ lam)
        grad = A @ x - b
        gnorm = float(np.linalg.norm(grad))
        if np.max(np.abs(grad)) <= tol:
            return x
        H = (A * x) @ A.T
        H += (1e-12 * (np.trace(H) / m + 1.0)) * np.eye(m)
        step = -np.linalg.solve(H, grad)
        cur = float(np.sum(x) - lam @ b)
        t = 1.0
        while t > 1e-18:
            lam_t = lam + t * step
            with np.errstate(over="ignore"):
                x_t = np.exp(A.T @ lam_t)
                val = float(np.sum(x_t) - lam_t @ b)
            decreased = np.isfinite(val) and val <= cur + 1e-4 * t * float(grad @ step)
            # near the optimum the objective sits at its roundoff floor;
            # a shrinking residual is the reliable progress signal there
            residual_ok = (np.all(np.isfinite(x_t))
                           and np.linalg.norm(A @ x_t - b) <= (1 - 1e-4 * t) * gnorm)
            if decreased or residual_ok:
                break
            t *= 0.5
        lam = lam + t * step
    x = np.exp(A.T @ lam)
    if np.max(np.abs(A @ x - b)) <= tol:
        return x
    raise RuntimeError("entropy oracle did not converge")
