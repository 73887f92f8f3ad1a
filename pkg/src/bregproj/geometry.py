"""Bregman divergences and projections onto hyperplanes, halfspaces, and
general affine sets.

Projections are computed through the dual problem: minimize

    Psi(lam) = phi*(grad_phi(x) + A^T lam) - phi*(grad_phi(x)) - <lam, b>

whose solutions satisfy grad_phi(x_star) = grad_phi(x) + A^T lam_star with
A x_star = b.  Hyperplanes reduce the dual to a scalar root find; general
affine sets use a damped Newton iteration.  The workspace is allocated per
call, inputs are never mutated, and all operations are pure, so concurrent
use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg
from .legendre import LegendreFunction

__all__ = [
    "DualSolveOptions",
    "ProjectionError",
    "Hyperplane",
    "GeneralAffineSet",
    "Halfspace",
    "divergence",
    "conjugate_divergence",
    "dual_objective",
    "project_hyperplane",
    "project_affine",
    "project_halfspace",
    "distance_to_set",
    "stack_sets",
    "load_matrix_market",
    "set_from_json",
]


class ProjectionError(RuntimeError):
    """A projection subproblem failed (bracketing, non-convergence, ...)."""


@dataclass(frozen=True)
class DualSolveOptions:
    """Inner-solve controls shared by all projection routines.

    `residual_tolerance` bounds the feasibility residual ||Ax - b||_inf of
    the returned point; the stopping rule for inner iterations is ours, the
    projection problem itself has no canonical one.
    """

    residual_tolerance: float = 1e-10
    max_newton_iterations: int = 100
    line_search_shrink: float = 0.5

    def __post_init__(self):
        if self.residual_tolerance <= 0:
            raise ValueError("residual_tolerance must be positive")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie in (0, 1)")


_DEFAULT_OPTS = DualSolveOptions()


# ---------------------------------------------------------------------------
# divergences
# ---------------------------------------------------------------------------

def divergence(f: LegendreFunction, x, y) -> float:
    """Bregman divergence D(x, y) = phi(x) - phi(y) - <x - y, grad_phi(y)>.

    Extended-real: +inf when y is not interior or x is outside dom phi.
    Nonnegative; tiny negative roundoff is clamped to zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not f.in_interior(y):
        return float("inf")
    vx = f.value(x)
    if not np.isfinite(vx):
        return float("inf")
    d = f.pairwise_divergence(x, y)
    if d is None:
        d = vx - f.value(y) - float((x - y) @ f.grad(y))
    return d if d > 0.0 else 0.0


def conjugate_divergence(f: LegendreFunction, u, v) -> float:
    """Bregman divergence of phi* between two conjugate-domain points."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not f.in_conj_domain(v) or not f.in_conj_domain(u):
        return float("inf")
    d = f.conj_value(u) - f.conj_value(v) - float((u - v) @ f.conj_grad(v))
    return d if d > 0.0 else 0.0


def dual_objective(f: LegendreFunction, A, b, x, lam) -> float:
    """Dual objective Psi(lam) of the projection of x onto {Az = b}.

    Returns +inf when grad_phi(x) + A^T lam leaves dom phi*.  For any
    feasible z, Psi(lam) = D(z, grad_conj(grad_phi(x) + A^T lam)) - D(z, x).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    y = f.grad(np.asarray(x, dtype=float))
    z = y + A.T @ lam
    if not f.in_conj_domain(z):
        return float("inf")
    return f.conj_value(z) - f.conj_value(y) - float(lam @ b)


# ---------------------------------------------------------------------------
# hyperplane projection: scalar dual root find
# ---------------------------------------------------------------------------

def _lambda_domain(f: LegendreFunction, y: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    """Open interval of lam keeping y + lam*a inside dom phi* (a box)."""
    lo, hi = f.conj_bounds()
    lam_lo, lam_hi = -np.inf, np.inf
    if np.isfinite(hi):
        pos, neg = a > 0, a < 0
        if np.any(pos):
            lam_hi = min(lam_hi, np.min((hi - y[pos]) / a[pos]))
        if np.any(neg):
            lam_lo = max(lam_lo, np.max((hi - y[neg]) / a[neg]))
    if np.isfinite(lo):
        pos, neg = a > 0, a < 0
        if np.any(pos):
            lam_lo = max(lam_lo, np.max((lo - y[pos]) / a[pos]))
        if np.any(neg):
            lam_hi = min(lam_hi, np.min((lo - y[neg]) / a[neg]))
    return float(lam_lo), float(lam_hi)


def project_hyperplane(f: LegendreFunction, a, b: float, x,
                       opts: DualSolveOptions | None = None) -> tuple[np.ndarray, float]:
    """Bregman projection of x onto the hyperplane {z : <a, z> = b}.

    Returns (x_star, lam_star) with grad_phi(x_star) = grad_phi(x) +
    lam_star * a.  The scalar dual residual lam -> <a, grad_conj(...)> - b is
    strictly increasing, so a sign-change bracket inside the conjugate
    domain pins a unique root; a safeguarded Newton iteration with bisection
    fallback then refines it.
    """
    opts = opts or _DEFAULT_OPTS
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.any(a):
        raise ValueError("hyperplane normal must be nonzero")
    tol = opts.residual_tolerance
    r0 = float(a @ x - b)
    if abs(r0) <= tol:
        return x.copy(), 0.0

    y = f.grad(x)
    lam_lo_dom, lam_hi_dom = _lambda_domain(f, y, a)

    def g(lam: float) -> float:
        u = y + lam * a
        if not f.in_conj_domain(u):
            # monotone: beyond a domain bound the residual keeps its sign
            return np.inf if lam > 0 else -np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            val = float(a @ f.conj_grad(u))
        return val - b

    def gprime(lam: float) -> float:
        u = y + lam * a
        if not f.in_conj_domain(u):
            return np.nan
        with np.errstate(over="ignore", invalid="ignore"):
            return float(_linalg.gram(f.conj_hess(u), a[None, :])[0, 0])

    # expand a bracket on the side where the root must lie (g is increasing)
    if r0 < 0.0:
        bound, sign = lam_hi_dom, 1.0
    else:
        bound, sign = lam_lo_dom, -1.0
    prev, g_prev = 0.0, r0
    bracket = None
    for j in range(64):
        cand = bound - (bound - 0.0) * 0.5 ** (j + 1) if np.isfinite(bound) else sign * 2.0**j
        gc = g(cand)
        if np.isnan(gc):
            break
        if gc == 0.0 or (gc > 0.0) != (g_prev > 0.0):
            bracket = (prev, cand) if prev < cand else (cand, prev)
            break
        prev, g_prev = cand, gc
    if bracket is None:
        raise ProjectionError(
            "hyperplane dual: no sign change inside the conjugate domain "
            "(the hyperplane may not meet the interior of dom phi)")

    lo, hi = bracket
    # orient so that g(lo) < 0 < g(hi)
    if g(lo) > 0.0:
        lo, hi = hi, lo
    lam = 0.5 * (lo + hi)
    step_old = abs(hi - lo)
    for _ in range(opts.max_newton_iterations):
        gv = g(lam)
        if np.isfinite(gv) and abs(gv) <= tol:
            break
        if gv < 0.0:
            lo = lam
        else:
            hi = lam
        gp = gprime(lam)
        newton_ok = np.isfinite(gv) and np.isfinite(gp) and gp > 0.0
        if newton_ok:
            cand = lam - gv / gp
            inside = min(lo, hi) < cand < max(lo, hi)
            if not inside or abs(2.0 * gv) > abs(step_old * gp):
                cand = 0.5 * (lo + hi)
        else:
            cand = 0.5 * (lo + hi)
        step_old = abs(cand - lam)
        lam = cand
    else:
        if abs(g(lam)) > tol:
            raise ProjectionError("hyperplane dual did not converge")

    x_star = f.conj_grad(y + lam * a)
    return x_star, float(lam)


# ---------------------------------------------------------------------------
# general affine projection: damped Newton on the dual
# ---------------------------------------------------------------------------

def project_affine(f: LegendreFunction, A, b, x,
                   opts: DualSolveOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Bregman projection of x onto {z : Az = b}.

    Runs a damped Newton iteration on the dual objective with Hessian
    A * hess_conj * A^T; rank-deficient systems get a small Tikhonov jitter
    (dual solutions need not be unique, the primal point is).  Backtracking
    keeps iterates inside dom phi*; the loop stops once the feasibility
    residual ||A z - b||_inf of the primal candidate is within tolerance.
    """
    opts = opts or _DEFAULT_OPTS
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.asarray(x, dtype=float)
    m = A.shape[0]
    tol = opts.residual_tolerance
    if np.max(np.abs(A @ x - b)) <= tol:
        return x.copy(), np.zeros(m)

    y = f.grad(x)
    lam = np.zeros(m)
    z = y.copy()

    def merit(lam_t, z_t):
        if not f.in_conj_domain(z_t):
            return np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            val = f.conj_value(z_t) - float(lam_t @ b)
        return val if np.isfinite(val) else np.inf

    cur = merit(lam, z)
    for _ in range(opts.max_newton_iterations):
        with np.errstate(over="ignore"):
            xz = f.conj_grad(z)
        grad = A @ xz - b
        if np.max(np.abs(grad)) <= tol:
            return xz, lam
        gnorm = float(np.linalg.norm(grad))
        H = _linalg.gram(f.conj_hess(z), A)
        jitter = 1e-12 * (np.trace(H) / m + 1.0)
        step = -_linalg.solve_psd(H, grad, jitter)
        slope = float(grad @ step)
        # Backtrack until the dual objective decreases (Armijo) or the primal
        # residual does; near the optimum the objective sits at its
        # floating-point floor while the residual still has headroom.
        t = 1.0
        while True:
            lam_t = lam + t * step
            z_t = y + A.T @ lam_t
            val = merit(lam_t, z_t)
            if val <= cur + 1e-4 * t * slope:
                break
            if np.isfinite(val):
                with np.errstate(over="ignore"):
                    res_t = float(np.linalg.norm(A @ f.conj_grad(z_t) - b))
                if res_t <= (1.0 - 1e-4 * t) * gnorm:
                    break
            t *= opts.line_search_shrink
            if t < 1e-18:
                raise ProjectionError("affine dual: line search underflow")
        lam, z, cur = lam_t, z_t, val
    xz = f.conj_grad(z)
    if np.max(np.abs(A @ xz - b)) <= tol:
        return xz, lam
    raise ProjectionError("affine dual Newton did not converge")


def project_halfspace(f: LegendreFunction, a, b: float, x,
                      opts: DualSolveOptions | None = None) -> np.ndarray:
    """Bregman projection onto {z : <a, z> <= b}: the identity on feasible
    points, otherwise the hyperplane projection."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if float(a @ x) <= b:
        return x.copy()
    return project_hyperplane(f, a, b, x, opts)[0]


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------

class Hyperplane:
    """Affine set {x : <a, x> = b} with a nonzero normal."""

    def __init__(self, a, b: float, label: int = 0):
        a = np.asarray(a, dtype=float).copy()
        if a.ndim != 1 or not np.any(a):
            raise ValueError("hyperplane normal must be a nonzero vector")
        a.flags.writeable = False
        self.a = a
        self.b = float(b)
        self.label = int(label)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def residual_inf(self, x) -> float:
        return abs(float(self.a @ np.asarray(x, dtype=float) - self.b))

    def equations(self) -> tuple[np.ndarray, np.ndarray]:
        return self.a[None, :], np.array([self.b])

    def project(self, f, x, opts=None):
        return project_hyperplane(f, self.a, self.b, x, opts)

    def distance(self, f, x, opts=None):
        """(D_set(x), projection); the projection is reused by the solver."""
        opts = opts or _DEFAULT_OPTS
        if self.residual_inf(x) <= opts.residual_tolerance:
            return 0.0, np.asarray(x, dtype=float).copy()
        x_star, _ = self.project(f, x, opts)
        return divergence(f, x_star, x), x_star

    def to_json(self) -> dict:
        return {"type": "hyperplane", "a": self.a.tolist(), "b": self.b,
                "label": self.label}


class GeneralAffineSet:
    """Affine set {x : Ax = b} for a dense nonzero operator A."""

    def __init__(self, A, b, label: int = 0):
        A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(b, dtype=float)).copy()
        if not np.any(A):
            raise ValueError("affine operator must be nonzero")
        if A.shape[0] != b.shape[0]:
            raise ValueError("row counts of A and b differ")
        A.flags.writeable = False
        b.flags.writeable = False
        self.A = A
        self.b = b
        self.label = int(label)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def residual_inf(self, x) -> float:
        return float(np.max(np.abs(self.A @ np.asarray(x, dtype=float) - self.b)))

    def equations(self) -> tuple[np.ndarray, np.ndarray]:
        return self.A, self.b

    def project(self, f, x, opts=None):
        return project_affine(f, self.A, self.b, x, opts)

    def distance(self, f, x, opts=None):
        opts = opts or _DEFAULT_OPTS
        if self.residual_inf(x) <= opts.residual_tolerance:
            return 0.0, np.asarray(x, dtype=float).copy()
        x_star, _ = self.project(f, x, opts)
        return divergence(f, x_star, x), x_star

    def to_json(self) -> dict:
        return {"type": "general", "A": self.A.tolist(), "b": self.b.tolist(),
                "label": self.label}


class Halfspace:
    """Convex set {x : <a, x> <= b}; exercises the general-convex path."""

    def __init__(self, a, b: float, label: int = 0):
        a = np.asarray(a, dtype=float).copy()
        if a.ndim != 1 or not np.any(a):
            raise ValueError("halfspace normal must be a nonzero vector")
        a.flags.writeable = False
        self.a = a
        self.b = float(b)
        self.label = int(label)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def residual_inf(self, x) -> float:
        return max(float(self.a @ np.asarray(x, dtype=float) - self.b), 0.0)

    def project(self, f, x, opts=None):
        x_star = project_halfspace(f, self.a, self.b, x, opts)
        return x_star, 0.0

    def distance(self, f, x, opts=None):
        opts = opts or _DEFAULT_OPTS
        if self.residual_inf(x) <= opts.residual_tolerance:
            return 0.0, np.asarray(x, dtype=float).copy()
        x_star, _ = self.project(f, x, opts)
        return divergence(f, x_star, x), x_star

    def to_json(self) -> dict:
        return {"type": "halfspace", "a": self.a.tolist(), "b": self.b,
                "label": self.label}


def distance_to_set(f: LegendreFunction, set_, x,
                    opts: DualSolveOptions | None = None) -> tuple[float, np.ndarray]:
    """Bregman distance from x to a constraint set, with the minimizer.

    Zero exactly when x already satisfies the constraint (to within the
    feasibility tolerance), in which case the point itself is returned.
    """
    d, x_proj = set_.distance(f, x, opts)
    if x_proj is None:
        x_proj = set_.project(f, x, opts)[0]
    return d, x_proj


def stack_sets(sets) -> GeneralAffineSet:
    """Stack the equations of affine sets into one system {Ax = b}."""
    rows, rhs = [], []
    for s in sets:
        A_i, b_i = s.equations()
        rows.append(np.atleast_2d(A_i))
        rhs.append(np.atleast_1d(b_i))
    return GeneralAffineSet(np.vstack(rows), np.concatenate(rhs), label=-1)


def load_matrix_market(path) -> np.ndarray:
    """Read a dense ndarray from a MatrixMarket coordinate/array file."""
    from scipy.io import mmread

    M = mmread(path)
    if hasattr(M, "toarray"):
        M = M.toarray()
    return np.asarray(M, dtype=float)


def set_from_json(obj: dict):
    """Rebuild a constraint set from its JSON form."""
    kind = obj["type"]
    label = int(obj.get("label", 0))
    if kind == "hyperplane":
        return Hyperplane(obj["a"], obj["b"], label)
    if kind == "general":
        return GeneralAffineSet(obj["A"], obj["b"], label)
    if kind == "halfspace":
        return Halfspace(obj["a"], obj["b"], label)
    if kind in ("ot_marginal", "ot_marginal_row"):
        from . import ot  # deferred: ot builds on this module

        if kind == "ot_marginal":
            return ot.MarginalSet(obj["axis"], obj["target"], obj["shape"], label)
        return ot.MarginalRowSet(obj["axis"], obj["level"], obj["value"],
                                 obj["shape"], label)
    raise ValueError(f"unknown set type {kind!r}")
