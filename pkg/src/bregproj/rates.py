"""Local contraction constants for affine families, assumption checks, and
the Kaczmarz-style specializations for row systems.

All constants are built from orthogonal projectors Q_i onto the ranges of
H A_i^T, where H is the PSD square root of the conjugate Hessian at the
solution; 1 - gamma is the local per-step contraction factor of the
distance to the intersection (greedy controls use the min-max constant,
random controls the smallest positive eigenvalue of the weighted average).
Constants at non-solution points involve suprema over level sets and are
not computed; only these solution-local values are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .controls import make_rng
from .legendre import LegendreFunction

__all__ = [
    "RateReport",
    "conj_hessian_at",
    "hessian_factor",
    "constraint_projector",
    "weighted_range_basis",
    "gamma_random",
    "gamma_greedy",
    "kaczmarz_rates",
    "check_rate_assumptions",
    "averaged_sketch_projector",
    "check_exactness",
]


def conj_hessian_at(f: LegendreFunction, x_star) -> np.ndarray:
    """Conjugate Hessian evaluated at grad_phi(x_star): a diagonal vector
    for separable generators, a dense matrix for the quadratic one."""
    return f.conj_hess(f.grad(np.asarray(x_star, dtype=float)))


def hessian_factor(f: LegendreFunction, x_star) -> np.ndarray:
    """Dense PSD square root H of the conjugate Hessian at the solution;
    roundoff-negative eigenvalues clamp to zero."""
    G = conj_hessian_at(f, x_star)
    if G.ndim == 1:
        return np.diag(np.sqrt(np.clip(G, 0.0, None)))
    return _linalg.sym_sqrt(G)


def _equations_of(set_or_matrix) -> np.ndarray:
    if hasattr(set_or_matrix, "equations"):
        return np.atleast_2d(set_or_matrix.equations()[0])
    return np.atleast_2d(np.asarray(set_or_matrix, dtype=float))


def constraint_projector(f: LegendreFunction, set_or_matrix, x_star,
                         H: np.ndarray | None = None) -> np.ndarray:
    """Orthogonal projector onto range(H A_i^T), as H A_i^T (A_i H^2 A_i^T)^+ A_i H.

    Returns the zero matrix when H A_i^T vanishes (a legal degenerate case).
    """
    A_i = _equations_of(set_or_matrix)
    H = hessian_factor(f, x_star) if H is None else H
    W = H @ A_i.T
    if not np.any(W):
        n = H.shape[0]
        return np.zeros((n, n))
    Q = W @ _linalg.pinv(W.T @ W) @ W.T
    return 0.5 * (Q + Q.T)


def weighted_range_basis(f: LegendreFunction, A, x_star,
                         H: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal basis of V = range(H A^T) for the stacked operator A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = hessian_factor(f, x_star) if H is None else H
    return _linalg.orth_basis(H @ A.T)


def gamma_random(f: LegendreFunction, sets, mu, x_star) -> float:
    """Smallest positive eigenvalue of the mu-averaged projector; the local
    random-control contraction factor is 1 minus this value."""
    mu = np.asarray(mu, dtype=float)
    if len(sets) != mu.shape[0]:
        raise ValueError("one weight per set required")
    H = hessian_factor(f, x_star)
    Qbar = np.zeros((H.shape[0], H.shape[0]))
    for w, s in zip(mu, sets):
        if w > 0:
            Qbar += w * constraint_projector(f, s, x_star, H)
    gamma = _linalg.smallest_positive_eigenvalue(Qbar)
    if gamma <= 0.0:
        raise ValueError("averaged projector is numerically zero")
    return gamma


def _sphere_min_max(mats, r: int, n_starts: int = 32, n_steps: int = 500,
                    tol: float = 1e-8, seed: int = 0) -> float:
    """Multi-start projected-descent estimate of
    min_{|c| = 1, c in R^r} max_i ||M_i c||^2.

    Heuristic: the objective is a max of quadratics, so the estimate is an
    upper bound on the true minimum (the value at the best point found).
    Start points are fixed by the seed, so results are reproducible and
    independent of evaluation order.
    """
    stacked = np.vstack(mats)
    sizes = np.array([M.shape[0] for M in mats])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def piece_vals(c):
        y = stacked @ c
        return np.add.reduceat(y * y, offsets)

    rng = make_rng(seed)
    starts = list(np.eye(r)[: min(r, n_starts)])
    while len(starts) < n_starts:
        v = rng.normal(size=r)
        nv = np.linalg.norm(v)
        if nv > 0:
            starts.append(v / nv)

    best = np.inf
    for c in starts:
        c = c.copy()
        vals = piece_vals(c)
        fc = float(vals.max())
        for _ in range(n_steps):
            i_star = int(np.argmax(vals))
            M = mats[i_star]
            g = 2.0 * M.T @ (M @ c)
            rg = g - float(c @ g) * c
            if np.max(np.abs(rg)) < tol:
                break
            t, improved = 0.5, False
            while t > 1e-16:
                cand = c - t * rg
                cand /= np.linalg.norm(cand)
                cand_vals = piece_vals(cand)
                fc_cand = float(cand_vals.max())
                if fc_cand < fc:
                    c, fc, vals, improved = cand, fc_cand, cand_vals, True
                    break
                t *= 0.5
            if not improved:
                break
        best = min(best, fc)
    return best


def gamma_greedy(f: LegendreFunction, sets, x_star, n_starts: int = 32,
                 n_steps: int = 500, tol: float = 1e-8,
                 seed: int = 0) -> tuple[float, float]:
    """(certified lower bound, heuristic estimate) for the greedy constant
    inf_{v in V} max_i ||Q_i v||^2 / ||v||^2.

    The lower bound is the uniform-weight random constant (the max always
    dominates the average); the estimate comes from multi-start projected
    descent on the sphere of V and upper-bounds the true infimum.
    """
    H = hessian_factor(f, x_star)
    stacked = np.vstack([_equations_of(s) for s in sets])
    U = weighted_range_basis(f, stacked, x_star, H)
    if U.shape[1] == 0:
        raise ValueError("A * conj-Hessian vanishes at the solution; "
                         "no direction to contract")
    mats = [constraint_projector(f, s, x_star, H) @ U for s in sets]
    estimate = _sphere_min_max(mats, U.shape[1], n_starts, n_steps, tol, seed)
    mu = np.full(len(sets), 1.0 / len(sets))
    lower = gamma_random(f, sets, mu, x_star)
    return lower, estimate


def kaczmarz_rates(f: LegendreFunction, A, b, x_star) -> tuple[float, float]:
    """Row-action contraction constants for the system {Ax = b} with each
    row its own constraint and uniform sampling.

    Rows are normalized by their H-weighted norms, D = diag(||H a_i||);
    with Abar = D^{-1} A this returns

        sigma_greedy = 1 - min_{v in range(Abar^T)} ||Abar v||_inf^2 / ||v||^2
        sigma_random = 1 - lambda_min^+ (Abar^T Abar) / m.

    The greedy expression is the squared-norm variant (consistent with the
    projector-based greedy constant in the Euclidean case).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != b.shape[0]:
        raise ValueError("row counts of A and b differ")
    m = A.shape[0]
    G = conj_hessian_at(f, x_star)
    if G.ndim == 1:
        D = np.sqrt((A * A) @ np.clip(G, 0.0, None))
    else:
        H = _linalg.sym_sqrt(G)
        D = np.linalg.norm(A @ H, axis=1)
    if np.any(D <= 0.0):
        raise ValueError("a constraint row vanishes after Hessian weighting")
    Abar = A / D[:, None]
    sigma_random = 1.0 - _linalg.smallest_positive_eigenvalue(Abar.T @ Abar) / m
    U = _linalg.orth_basis(Abar.T)
    mats = [row[None, :] @ U for row in Abar]
    sigma_greedy = 1.0 - _sphere_min_max(mats, U.shape[1])
    return sigma_greedy, sigma_random


def check_rate_assumptions(f: LegendreFunction, sets, x_star) -> tuple[bool, float]:
    """Verify the rate assumptions at a solution point.

    Returns (holds, sup_norm) where `holds` checks that the stacked
    operator composed with the conjugate Hessian does not vanish, and
    `sup_norm` is max_i ||A_i^T (A_i G A_i^T)^+ A_i|| (finite automatically
    for a finite family).
    """
    G = conj_hessian_at(f, x_star)
    Gd = np.diag(G) if G.ndim == 1 else G
    sup_norm = 0.0
    blocks = []
    for s in sets:
        A_i = _equations_of(s)
        blocks.append(A_i)
        M = A_i.T @ _linalg.pinv(A_i @ Gd @ A_i.T) @ A_i
        sup_norm = max(sup_norm, _linalg.operator_norm(M))
    A = np.vstack(blocks)
    AG = A @ Gd
    scale = _linalg.operator_norm(A) * _linalg.operator_norm(Gd)
    holds = _linalg.operator_norm(AG) > _linalg.rank_threshold(scale, AG.shape)
    return bool(holds), float(sup_norm)


def averaged_sketch_projector(A, sketches, mu) -> np.ndarray:
    """E = sum_i mu_i S_i (S_i^T A A^T S_i)^+ S_i^T for sketch matrices S_i."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    mu = np.asarray(mu, dtype=float)
    AAT = A @ A.T
    E = np.zeros_like(AAT)
    for w, S in zip(mu, sketches):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        E += w * (S @ _linalg.pinv(S.T @ AAT @ S) @ S.T)
    return 0.5 * (E + E.T)


def check_exactness(A, E) -> bool:
    """Whether range(A) meets the kernel of the averaged sketch projector
    only at the origin, via a rank test on the stacked bases."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Ra = _linalg.orth_basis(A)
    K = _linalg.null_basis(np.asarray(E, dtype=float))
    if K.shape[1] == 0 or Ra.shape[1] == 0:
        return True
    stacked = np.hstack([Ra, K])
    s = np.linalg.svd(stacked, compute_uv=False)
    thr = _linalg.rank_threshold(float(s[0]), stacked.shape)
    return int(np.sum(s > thr)) == Ra.shape[1] + K.shape[1]


@dataclass
class RateReport:
    """Solution-local contraction constants plus assumption diagnostics."""

    gamma_random: float
    gamma_greedy_lower: float
    gamma_greedy_estimate: float
    assumptions_hold: bool
    assumption_sup_norm: float
    exactness: bool | None = None
    sigma_kaczmarz_greedy: float | None = None
    sigma_kaczmarz_random: float | None = None
    notes: list[str] = field(default_factory=list)

    @classmethod
    def for_family(cls, f: LegendreFunction, sets, x_star,
                   mu=None) -> "RateReport":
        """Assemble the report at a solution point.

        `mu` defaults to uniform weights.  Row families (all single-row
        sets) additionally get the normalized-row constants.
        """
        mu = np.full(len(sets), 1.0 / len(sets)) if mu is None else np.asarray(mu)
        notes = ["greedy estimate from multi-start projected descent "
                 "(upper bound on the true min-max constant)"]
        g_random = gamma_random(f, sets, mu, x_star)
        g_lower, g_est = gamma_greedy(f, sets, x_star)
        holds, sup_norm = check_rate_assumptions(f, sets, x_star)
        sig_g = sig_r = None
        blocks = [_equations_of(s) for s in sets]
        if all(B.shape[0] == 1 for B in blocks):
            A = np.vstack(blocks)
            b = np.concatenate([np.atleast_1d(s.equations()[1]) for s in sets])
            sig_g, sig_r = kaczmarz_rates(f, A, b, x_star)
            notes.append("row-family constants use Hessian-weighted row "
                         "normalization; the greedy one is the squared-norm "
                         "variant")
        return cls(gamma_random=g_random, gamma_greedy_lower=g_lower,
                   gamma_greedy_estimate=g_est, assumptions_hold=holds,
                   assumption_sup_norm=sup_norm,
                   sigma_kaczmarz_greedy=sig_g, sigma_kaczmarz_random=sig_r,
                   notes=notes)

    @property
    def local_random_rate(self) -> float:
        return 1.0 - self.gamma_random

    @property
    def local_greedy_rate(self) -> float:
        return 1.0 - self.gamma_greedy_estimate

    def to_json(self) -> dict:
        return {
            "gamma_random": self.gamma_random,
            "gamma_greedy_lower": self.gamma_greedy_lower,
            "gamma_greedy_estimate": self.gamma_greedy_estimate,
            "local_random_rate": self.local_random_rate,
            "local_greedy_rate": self.local_greedy_rate,
            "assumptions_hold": self.assumptions_hold,
            "assumption_sup_norm": self.assumption_sup_norm,
            "exactness": self.exactness,
            "sigma_kaczmarz_greedy": self.sigma_kaczmarz_greedy,
            "sigma_kaczmarz_random": self.sigma_kaczmarz_random,
            "notes": list(self.notes),
        }
