"""Sequential Bregman-projection driver with per-step tracing.

Each step projects the current iterate onto the set chosen by the control
scheme; iterates therefore stay inside the interior of dom phi.  Traces
record the selected set, its Bregman distance, the linear residual, and
(optionally) the distance to the full intersection, which for affine
families is measured against the invariant projection target of the start
point (one projection total, not one per step).
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controls import ControlScheme, ControlState, derive_seeds, next_index
from .geometry import (DualSolveOptions, GeneralAffineSet, divergence,
                       project_affine, stack_sets)
from .legendre import LegendreFunction

__all__ = [
    "FeasibilityProblem",
    "SolveOptions",
    "StepRecord",
    "IterationTrace",
    "solve",
    "fixed_target",
    "estimate_rate",
    "run_trials",
    "worker_count",
]

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"


class FeasibilityProblem:
    """A generator, a finite family of constraint sets, and a start point.

    `intersection` optionally provides the stacked system {Ax = b} used for
    diagnostics (distance-to-intersection traces, projection targets); when
    omitted it is stacked from the sets on demand, which requires every set
    to be affine.
    """

    def __init__(self, f: LegendreFunction, sets, x0,
                 intersection: GeneralAffineSet | None = None):
        if not sets:
            raise ValueError("need at least one constraint set")
        x0 = np.asarray(x0, dtype=float)
        if not f.in_interior(x0):
            raise ValueError("x0 must lie in the interior of dom phi")
        self.f = f
        self.sets = list(sets)
        self.x0 = x0.copy()
        self.x0.flags.writeable = False
        self._intersection = intersection
        self._targets: dict = {}

    @property
    def m(self) -> int:
        return len(self.sets)

    @property
    def dim(self) -> int:
        return self.x0.shape[0]

    def intersection(self) -> GeneralAffineSet:
        if self._intersection is None:
            self._intersection = stack_sets(self.sets)
        return self._intersection

    def all_affine(self) -> bool:
        return all(hasattr(s, "equations") for s in self.sets)

    def residual(self, x) -> float:
        """max_i ||A_i x - b_i||_inf over the family."""
        return max(s.residual_inf(x) for s in self.sets)


@dataclass(frozen=True)
class SolveOptions:
    """Outer-loop controls.

    Stopping is on the linear residual max_i ||A_i x - b_i||_inf, which is
    cheap, dimension-free to threshold, and zero exactly on membership for
    affine sets.  Inner projections are automatically solved at least ten
    times tighter than `stop_residual`, or the outer target could never be
    reached.
    """

    max_iterations: int = 10_000
    stop_residual: float = 1e-8
    trace_every: int = 1
    compute_dc_trace: bool = False
    store_iterates: bool = False
    dual: DualSolveOptions = field(default_factory=DualSolveOptions)

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.stop_residual <= 0:
            raise ValueError("stop_residual must be positive")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        inner = min(self.dual.residual_tolerance,
                    max(0.1 * self.stop_residual, 1e-14))
        if inner < self.dual.residual_tolerance:
            object.__setattr__(self, "dual",
                               replace(self.dual, residual_tolerance=inner))


@dataclass(frozen=True)
class StepRecord:
    """State at the start of step k, plus the set selected there."""

    k: int
    xi: int
    d_sel: float
    res: float
    dc: float | None
    t_ms: float

    def to_json(self) -> dict:
        return {"k": self.k, "xi": self.xi, "d_sel": self.d_sel,
                "res": self.res, "DC": self.dc, "t_ms": self.t_ms}


@dataclass
class IterationTrace:
    records: list[StepRecord]
    x_final: np.ndarray
    status: str
    iterations: int
    final_residual: float
    dc_final: float | None = None
    iterates: list[np.ndarray] | None = None

    def dc_sequence(self) -> np.ndarray:
        """Distance-to-intersection values along the run (incl. final)."""
        vals = [r.dc for r in self.records if r.dc is not None]
        if self.dc_final is not None:
            vals.append(self.dc_final)
        return np.asarray(vals, dtype=float)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r.to_json()) for r in self.records)

    def summary(self) -> dict:
        out = {"status": self.status, "iterations": self.iterations,
               "final_residual": self.final_residual}
        if self.dc_final is not None:
            out["DC_final"] = self.dc_final
        try:
            g, t = estimate_rate(self)
            out["global_rate"] = g
            out["tail_rate"] = t
        except ValueError:
            pass
        return out


def fixed_target(problem: FeasibilityProblem,
                 opts: DualSolveOptions | None = None) -> np.ndarray:
    """Projection of the start point onto the full intersection.

    For affine families this point is invariant along the run: every
    iterate projects onto the intersection at the same place.  Cached per
    problem (keyed by tolerance), since repeated trials share it.
    """
    if not problem.all_affine():
        raise ValueError("fixed target requires an affine family")
    key = opts.residual_tolerance if opts is not None else None
    cached = problem._targets.get(key)
    if cached is None:
        inter = problem.intersection()
        cached, _ = project_affine(problem.f, inter.A, inter.b, problem.x0, opts)
        cached.flags.writeable = False
        problem._targets[key] = cached
    return cached


def solve(problem: FeasibilityProblem, scheme: ControlScheme,
          opts: SolveOptions | None = None) -> IterationTrace:
    """Run the projection method until the residual target or the budget.

    Returns the trace; a run starting at a feasible point converges with
    zero iterations and an empty trace.
    """
    opts = opts or SolveOptions()
    f, sets = problem.f, problem.sets
    x = np.array(problem.x0, dtype=float)
    state = ControlState.for_scheme(scheme, problem.m)

    dc_of = None
    if opts.compute_dc_trace:
        x_star = fixed_target(problem, opts.dual)
        dc_of = lambda v: divergence(f, x_star, v)

    records: list[StepRecord] = []
    iterates = [x.copy()] if opts.store_iterates else None
    res = problem.residual(x)
    status = CONVERGED if res <= opts.stop_residual else BUDGET_EXHAUSTED
    iterations = 0

    while status != CONVERGED and iterations < opts.max_iterations:
        k = iterations
        t0 = time.perf_counter()
        try:
            if scheme.needs_distances:
                dists, projs = [], []
                for s in sets:
                    d, xp = s.distance(f, x, opts.dual)
                    dists.append(d)
                    projs.append(xp)
                idx = next_index(scheme, state, np.asarray(dists))
                d_sel = dists[idx]
                x_next = projs[idx]
                if x_next is None:
                    x_next = sets[idx].project(f, x, opts.dual)[0]
            else:
                idx = next_index(scheme, state)
                d_sel, x_next = sets[idx].distance(f, x, opts.dual)
                if x_next is None:
                    x_next = sets[idx].project(f, x, opts.dual)[0]
        except Exception as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        t_ms = (time.perf_counter() - t0) * 1e3

        if k % opts.trace_every == 0:
            dc = dc_of(x) if dc_of is not None else None
            records.append(StepRecord(k, idx, float(d_sel), res, dc, t_ms))
        x = x_next
        res = problem.residual(x)
        iterations += 1
        if iterates is not None:
            iterates.append(x.copy())
        if res <= opts.stop_residual:
            status = CONVERGED

    return IterationTrace(
        records=records,
        x_final=x,
        status=status,
        iterations=iterations,
        final_residual=res,
        dc_final=dc_of(x) if dc_of is not None else None,
        iterates=iterates,
    )


def estimate_rate(trace_or_dc) -> tuple[float, float]:
    """(global, tail) per-step contraction estimates from a D_C sequence.

    Ratios are truncated at the first exact zero.  The global rate is the
    worst observed ratio, the tail rate the geometric mean of the last
    quartile of ratios.  Requires at least 10 positive entries.
    """
    if isinstance(trace_or_dc, IterationTrace):
        dc = trace_or_dc.dc_sequence()
    else:
        dc = np.asarray(trace_or_dc, dtype=float)
    nonpos = np.nonzero(dc <= 0.0)[0]
    positive = dc if nonpos.size == 0 else dc[: nonpos[0]]
    if positive.size < 10:
        raise ValueError("need a distance sequence with at least 10 positive entries")
    ratios = positive[1:] / positive[:-1]
    tail = ratios[-max(1, ratios.size // 4):]
    return float(np.max(ratios)), float(np.exp(np.mean(np.log(tail))))


def worker_count() -> int:
    """Worker-pool size for batch runs, capped by BREGPROJ_THREADS."""
    raw = os.environ.get("BREGPROJ_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return 1


def run_trials(problem: FeasibilityProblem, scheme: ControlScheme,
               opts: SolveOptions, trials: int, seed: int,
               threads: int | None = None) -> list[IterationTrace]:
    """Independent repeated solves on derived seeds, in trial order.

    Trial 0 runs on the root seed itself, so a single-trial batch
    reproduces the corresponding direct solve.  Results are keyed by trial
    index and identical regardless of the worker count.
    """
    seeds = derive_seeds(seed, trials)
    schemes = [scheme.reseeded(s) for s in seeds]
    threads = worker_count() if threads is None else max(1, threads)
    if threads == 1 or trials <= 1:
        return [solve(problem, sch, opts) for sch in schemes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(solve, problem, sch, opts) for sch in schemes]
        return [fut.result() for fut in futures]


def with_options(opts: SolveOptions, **kwargs) -> SolveOptions:
    """Copy of the options with some fields replaced."""
    return replace(opts, **kwargs)
