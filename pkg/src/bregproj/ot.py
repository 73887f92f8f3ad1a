"""Multimarginal entropic optimal transport as a feasibility problem.

The regularized plan is the KL projection of the Gibbs kernel onto the
intersection of the marginal constraint sets.  Projections onto a single
marginal (or a single marginal entry) have closed forms: scale the slices
by target/current.  Running the generic driver over the axis sets with a
greedy control is the Sinkhorn iteration (alternating for two marginals);
running it over the scalar rows is the Greenkhorn iteration.
"""

from __future__ import annotations

import numpy as np
from scipy.special import rel_entr

from .controls import ControlScheme
from .geometry import Hyperplane
from .legendre import boltzmann_shannon
from .solver import FeasibilityProblem, IterationTrace, SolveOptions, solve

__all__ = [
    "gibbs_kernel",
    "marginal",
    "kl_divergence",
    "kl_project_marginal",
    "marginal_matrix",
    "MarginalSet",
    "MarginalRowSet",
    "OtProblem",
    "marginal_sets",
    "greenkhorn_sets",
    "coupling_problem",
    "solve_ot",
]

# exp(-t) underflows all the way to zero past this; reject instead of
# silently producing a kernel with vanishing entries
MAX_COST_RATIO = 700.0


def gibbs_kernel(cost, eta: float) -> np.ndarray:
    """Entrywise exp(-cost/eta); strictly positive."""
    if eta <= 0:
        raise ValueError("regularization eta must be positive")
    cost = np.asarray(cost, dtype=float)
    ratio = cost / eta
    if np.max(ratio) > MAX_COST_RATIO:
        raise ValueError(
            "cost/eta exceeds 700 somewhere; the kernel would underflow to "
            "zero in double precision - increase eta or rescale the cost")
    return np.exp(-ratio)


def marginal(pi, axis: int) -> np.ndarray:
    """Push-forward of the coupling onto one axis (sum over all others)."""
    pi = np.asarray(pi, dtype=float)
    axes = tuple(j for j in range(pi.ndim) if j != axis)
    return pi.sum(axis=axes)


def kl_divergence(p, q) -> float:
    """sum p log(p/q) - p + q with the 0 log 0 = 0 convention.

    Computed through the cancellation-free form p * h((q-p)/p) with
    h(d) = d - log1p(d), which keeps relative accuracy when p and q are
    close (the naive sum bottoms out at eps * total mass).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0.0
    total = float(np.sum(q[~pos])) + float(np.sum(rel_entr(p[~pos], q[~pos])))
    pp, qp = p[pos], q[pos]
    delta = (qp - pp) / pp
    total += float(np.sum(pp * (delta - np.log1p(delta))))
    return total


def _broadcast(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = values.shape[0]
    return values.reshape(shape)


def kl_project_marginal(pi, axis: int, target) -> np.ndarray:
    """KL projection onto {marginal(., axis) = target}: slice rescaling.

    The output's marginal on `axis` equals the target exactly (up to
    roundoff), and the KL distance moved equals KL(target, marginal(pi)).
    """
    pi = np.asarray(pi, dtype=float)
    target = np.asarray(target, dtype=float)
    marg = marginal(pi, axis)
    if np.any((marg <= 0.0) & (target > 0.0)):
        raise ValueError("zero marginal where the target is positive; "
                         "no scaling reaches the constraint")
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(marg > 0.0, target / np.where(marg > 0.0, marg, 1.0), 0.0)
    return pi * _broadcast(scale, axis, pi.ndim)


def marginal_matrix(shape, axis: int) -> np.ndarray:
    """Dense 0/1 matrix of the axis-marginal operator on flattened couplings."""
    shape = tuple(int(s) for s in shape)
    n_i = shape[axis]
    total = int(np.prod(shape))
    rows = np.zeros((n_i, total))
    for h in range(n_i):
        block = np.zeros(shape)
        idx = [slice(None)] * len(shape)
        idx[axis] = h
        block[tuple(idx)] = 1.0
        rows[h] = block.ravel()
    return rows


class MarginalSet:
    """{pi : marginal(pi, axis) = target}, over flattened couplings.

    Distances and projections use the closed forms, so greedy and adaptive
    controls over these sets need no inner dual solves.
    """

    def __init__(self, axis: int, target, shape, label: int = 0):
        target = np.asarray(target, dtype=float).copy()
        shape = tuple(int(s) for s in shape)
        if target.shape != (shape[axis],):
            raise ValueError("target length must match the axis size")
        if np.any(target < 0) or abs(target.sum() - 1.0) > 1e-12:
            raise ValueError("target must lie in the unit simplex")
        target.flags.writeable = False
        self.axis = int(axis)
        self.target = target
        self.shape = shape
        self.label = int(label)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def _tensor(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(self.shape)

    def residual_inf(self, x) -> float:
        return float(np.max(np.abs(marginal(self._tensor(x), self.axis) - self.target)))

    def equations(self) -> tuple[np.ndarray, np.ndarray]:
        return marginal_matrix(self.shape, self.axis), self.target.copy()

    def project(self, f, x, opts=None):
        pi = self._tensor(x)
        marg = marginal(pi, self.axis)
        out = kl_project_marginal(pi, self.axis, self.target)
        with np.errstate(divide="ignore"):
            lam = np.where(marg > 0.0, np.log(self.target / np.where(marg > 0, marg, 1.0)), 0.0)
        return out.ravel(), lam

    def distance(self, f, x, opts=None):
        d = kl_divergence(self.target, marginal(self._tensor(x), self.axis))
        return (d if d > 0.0 else 0.0), None

    def to_json(self) -> dict:
        return {"type": "ot_marginal", "axis": self.axis,
                "target": self.target.tolist(), "shape": list(self.shape),
                "label": self.label}


class MarginalRowSet:
    """One scalar marginal equation {pi : sum of the (axis, level) slice = value}.

    The coefficient vector is the 0/1 indicator of the slice; under the
    entropy geometry the projection rescales that slice alone.
    """

    def __init__(self, axis: int, level: int, value: float, shape, label: int = 0):
        self.axis = int(axis)
        self.level = int(level)
        self.value = float(value)
        self.shape = tuple(int(s) for s in shape)
        self.label = int(label)
        if not 0 <= self.level < self.shape[self.axis]:
            raise ValueError("level outside the axis range")
        if self.value < 0:
            raise ValueError("marginal entries must be nonnegative")

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def _slice(self):
        idx = [slice(None)] * len(self.shape)
        idx[self.axis] = self.level
        return tuple(idx)

    def _slice_sum(self, x) -> float:
        pi = np.asarray(x, dtype=float).reshape(self.shape)
        return float(pi[self._slice()].sum())

    def residual_inf(self, x) -> float:
        return abs(self._slice_sum(x) - self.value)

    def equations(self) -> tuple[np.ndarray, np.ndarray]:
        block = np.zeros(self.shape)
        block[self._slice()] = 1.0
        return block.ravel()[None, :], np.array([self.value])

    def as_hyperplane(self) -> Hyperplane:
        a, b = self.equations()
        return Hyperplane(a[0], float(b[0]), label=self.label)

    def project(self, f, x, opts=None):
        pi = np.asarray(x, dtype=float).reshape(self.shape).copy()
        s = float(pi[self._slice()].sum())
        if s <= 0.0 and self.value > 0.0:
            raise ValueError("zero slice mass where the target is positive")
        scale = self.value / s if s > 0.0 else 0.0
        pi[self._slice()] *= scale
        lam = float(np.log(scale)) if scale > 0.0 else 0.0
        return pi.ravel(), lam

    def distance(self, f, x, opts=None):
        s = self._slice_sum(x)
        if self.value <= 0.0:
            return max(s, 0.0), None
        delta = (s - self.value) / self.value
        d = self.value * (delta - np.log1p(delta))
        return (d if d > 0.0 else 0.0), None

    def to_json(self) -> dict:
        return {"type": "ot_marginal_row", "axis": self.axis,
                "level": self.level, "value": self.value,
                "shape": list(self.shape), "label": self.label}


class OtProblem:
    """Cost tensor, regularization, and one target marginal per axis.

    Marginals must be strictly positive so that the constraint polytope
    meets the interior of the entropy domain (iterates from the kernel then
    stay strictly positive).  The kernel is precomputed at construction.
    """

    def __init__(self, cost, eta: float, marginals):
        cost = np.asarray(cost, dtype=float)
        if cost.ndim < 1:
            raise ValueError("cost must be a tensor with one axis per marginal")
        if len(marginals) != cost.ndim:
            raise ValueError("need exactly one marginal per cost axis")
        self.cost = cost.copy()
        self.cost.flags.writeable = False
        self.eta = float(eta)
        self.kernel = gibbs_kernel(cost, eta)
        self.kernel.flags.writeable = False
        self.marginals = []
        for i, rho in enumerate(marginals):
            rho = np.asarray(rho, dtype=float).copy()
            if rho.shape != (cost.shape[i],):
                raise ValueError(f"marginal {i} has the wrong length")
            if abs(rho.sum() - 1.0) > 1e-12 or np.any(rho < 0):
                raise ValueError(f"marginal {i} must lie in the unit simplex")
            if np.any(rho <= 0.0):
                raise ValueError(
                    f"marginal {i} has a zero entry; the constraint set then "
                    "misses the interior of the entropy domain - drop the "
                    "zero-mass atoms first")
            rho.flags.writeable = False
            self.marginals.append(rho)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cost.shape

    @property
    def n_marginals(self) -> int:
        return len(self.marginals)

    def to_json(self) -> dict:
        return {"shape": list(self.shape), "cost": self.cost.ravel().tolist(),
                "eta": self.eta,
                "marginals": [r.tolist() for r in self.marginals]}

    @classmethod
    def from_json(cls, obj: dict) -> "OtProblem":
        shape = tuple(int(s) for s in obj["shape"])
        cost = np.asarray(obj["cost"], dtype=float).reshape(shape)
        return cls(cost, float(obj["eta"]), obj["marginals"])


def marginal_sets(problem: OtProblem) -> list[MarginalSet]:
    """One full-marginal constraint set per axis."""
    return [MarginalSet(i, rho, problem.shape, label=i)
            for i, rho in enumerate(problem.marginals)]


def greenkhorn_sets(problem: OtProblem) -> list[MarginalRowSet]:
    """One scalar constraint per marginal entry (sum of the axis sizes)."""
    sets, label = [], 0
    for i, rho in enumerate(problem.marginals):
        for h, value in enumerate(rho):
            sets.append(MarginalRowSet(i, h, float(value), problem.shape, label=label))
            label += 1
    return sets


def coupling_problem(problem: OtProblem, row_sets: bool = False) -> FeasibilityProblem:
    """Feasibility problem over flattened couplings, started at the kernel."""
    sets = greenkhorn_sets(problem) if row_sets else marginal_sets(problem)
    f = boltzmann_shannon(int(np.prod(problem.shape)))
    return FeasibilityProblem(f, sets, problem.kernel.ravel())


def solve_ot(problem: OtProblem, scheme: ControlScheme | None = None,
             opts: SolveOptions | None = None,
             row_sets: bool = False) -> tuple[np.ndarray, IterationTrace]:
    """Iterated KL projection onto the marginal sets, from the kernel.

    The default greedy control over the axis sets alternates for two
    marginals (classical Sinkhorn); `row_sets=True` projects one marginal
    entry at a time instead (greedy there is the Greenkhorn iteration).
    """
    fp = coupling_problem(problem, row_sets=row_sets)
    scheme = scheme or ControlScheme.greedy()
    trace = solve(fp, scheme, opts)
    return trace.x_final.reshape(problem.shape), trace
