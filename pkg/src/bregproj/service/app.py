"""FastAPI service wrapping the solver package.

The route handlers are plain functions over the pydantic models; the CLI
calls them in-process by default and over HTTP with --server, so both
transports run identical code.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, ot, rates
from ..controls import ControlScheme
from ..geometry import ProjectionError
from ..problems import build, build_options
from ..solver import (IterationTrace, estimate_rate, fixed_target, run_trials,
                      solve, with_options)
from .schemas import (BenchControlStats, BenchRequest, BenchResponse,
                      OtRequest, OtResponse, ProblemSpec, RatesRequest,
                      RatesResponse, SolveResponse, SolveSummaryModel,
                      TraceRecordModel)

__all__ = ["app", "handle_solve", "handle_rates", "handle_bench", "handle_ot"]


def _summary_model(trace: IterationTrace) -> SolveSummaryModel:
    return SolveSummaryModel(**trace.summary())


def _trace_models(trace: IterationTrace) -> list[TraceRecordModel]:
    return [TraceRecordModel(k=r.k, xi=r.xi, d_sel=r.d_sel, res=r.res,
                             DC=r.dc, t_ms=r.t_ms) for r in trace.records]


def handle_solve(spec: ProblemSpec) -> SolveResponse:
    loaded = build(spec.to_document())
    trace = solve(loaded.problem, loaded.scheme, loaded.options)
    return SolveResponse(summary=_summary_model(trace),
                         trace=_trace_models(trace),
                         x_final=trace.x_final.tolist())


def handle_rates(req: RatesRequest) -> RatesResponse:
    loaded = build(req.problem.to_document())
    problem = loaded.problem
    if not problem.all_affine():
        raise ValueError("rate constants are defined for affine families only")
    x_star = fixed_target(problem, loaded.options.dual)
    scheme = loaded.scheme
    mu = scheme.mu if scheme.mu is not None else None
    report = rates.RateReport.for_family(problem.f, problem.sets, x_star, mu)

    if loaded.sketch is not None:
        weights = mu if mu is not None else np.full(problem.m, 1.0 / problem.m)
        E = rates.averaged_sketch_projector(loaded.sketch.A,
                                            loaded.sketch.sketch_matrices(),
                                            weights)
        report.exactness = rates.check_exactness(loaded.sketch.A, E)

    observed_g = observed_t = None
    if req.trace_dc:
        observed_g, observed_t = estimate_rate(np.asarray(req.trace_dc, dtype=float))

    return RatesResponse(
        gamma_random=report.gamma_random,
        gamma_greedy_lower=report.gamma_greedy_lower,
        gamma_greedy_estimate=report.gamma_greedy_estimate,
        local_random_rate=report.local_random_rate,
        local_greedy_rate=report.local_greedy_rate,
        assumptions_hold=report.assumptions_hold,
        assumption_sup_norm=report.assumption_sup_norm,
        exactness=report.exactness,
        sigma_kaczmarz_greedy=report.sigma_kaczmarz_greedy,
        sigma_kaczmarz_random=report.sigma_kaczmarz_random,
        observed_global_rate=observed_g,
        observed_tail_rate=observed_t,
        notes=report.notes,
    )


def _bench_stats(control: str, traces: list[IterationTrace]) -> BenchControlStats:
    """Order-independent aggregation: trials are keyed by index and every
    statistic is a mean over (trial, step) pairs."""
    ratios: list[float] = []
    per_step: dict[int, list[float]] = {}
    for trace in traces:
        dc = trace.dc_sequence()
        for k, v in enumerate(dc):
            per_step.setdefault(k, []).append(float(v))
        good = dc[:-1] > 0
        ratios.extend((dc[1:][good] / dc[:-1][good]).tolist())
    steps = sorted(per_step)
    mean_dc = [float(np.mean(per_step[k])) for k in steps]
    mean_ratio = float(np.mean(ratios)) if ratios else 0.0
    return BenchControlStats(control=control, trials=len(traces),
                             mean_dc_per_step=mean_dc, mean_step_ratio=mean_ratio)


def handle_bench(req: BenchRequest) -> BenchResponse:
    loaded = build(req.problem.to_document())
    scheme = loaded.scheme
    if scheme.kind not in ("random", "adaptive"):
        raise ValueError("bench requires a random or adaptive control")
    if req.trials < 1:
        raise ValueError("trials must be positive")
    opts = with_options(loaded.options, compute_dc_trace=True, trace_every=1)

    results = []
    by_control = {}
    controls = [scheme.kind]
    other = "adaptive" if scheme.kind == "random" else "random"
    if req.trials > 1:
        controls.append(other)  # paired-seed comparison partner
    for kind in controls:
        sch = ControlScheme(kind, scheme.mu, scheme.seed)
        traces = run_trials(loaded.problem, sch, opts, req.trials, req.seed)
        stats = _bench_stats(kind, traces)
        results.append(stats)
        by_control[kind] = stats.mean_step_ratio

    return BenchResponse(trials=req.trials, seed=req.seed,
                         requested_control=scheme.kind, results=results,
                         mean_ratio_by_control=by_control)


def handle_ot(req: OtRequest) -> OtResponse:
    problem = ot.OtProblem.from_json(req.ot.model_dump())
    row_sets = req.algo == "greenkhorn"
    fp = ot.coupling_problem(problem, row_sets=row_sets)
    if req.algo in ("sinkhorn", "greenkhorn"):
        scheme = ControlScheme.greedy()
    else:
        scheme = ControlScheme.uniform(req.algo, fp.m, req.seed)
    trace = solve(fp, scheme, build_options(req.options.model_dump()))
    return OtResponse(summary=_summary_model(trace), trace=_trace_models(trace),
                      shape=list(problem.shape), plan=trace.x_final.tolist())


app = FastAPI(title="bregproj", version=__version__,
              description="Bregman-projection feasibility solvers as a service")


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


def _guard(fn, *args):
    try:
        return fn(*args)
    except (ValueError, KeyError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except ProjectionError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


@app.post("/solve", response_model=SolveResponse)
def solve_endpoint(spec: ProblemSpec) -> SolveResponse:
    return _guard(handle_solve, spec)


@app.post("/rates", response_model=RatesResponse)
def rates_endpoint(req: RatesRequest) -> RatesResponse:
    return _guard(handle_rates, req)


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest) -> BenchResponse:
    return _guard(handle_bench, req)


@app.post("/ot", response_model=OtResponse)
def ot_endpoint(req: OtRequest) -> OtResponse:
    return _guard(handle_ot, req)
