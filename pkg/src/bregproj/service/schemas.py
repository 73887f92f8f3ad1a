"""Request/response models for the solver service.

`ProblemSpec` mirrors the on-disk problem-file schema one-to-one, so a
document validated here is exactly what the CLI reads and ships.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

Control = Literal["cyclic", "greedy", "random", "adaptive"]
OtAlgo = Literal["sinkhorn", "greenkhorn", "random", "adaptive"]


class LegendreSpec(BaseModel):
    kind: str
    params: dict = Field(default_factory=dict)
    dim: Optional[int] = None


class SystemSpec(BaseModel):
    A: Optional[list[list[float]]] = None
    b: Optional[list[float]] = None
    mm_path: Optional[str] = None
    b_path: Optional[str] = None


class SketchSpec(BaseModel):
    kind: Literal["rows", "blocks", "gaussian"] = "rows"
    tau: Optional[int] = None
    count: Optional[int] = None
    seed: int = 0


class OtSpec(BaseModel):
    shape: list[int]
    cost: list[float]
    eta: float
    marginals: list[list[float]]


class ControlSpec(BaseModel):
    control: Control = "greedy"
    mu: Optional[list[float]] = None
    seed: int = 0


class OptionsSpec(BaseModel):
    max_iterations: int = 10_000
    stop_residual: float = 1e-8
    trace_every: int = 1
    dc_trace: bool = False
    store_iterates: bool = False
    inner_tolerance: float = 1e-10


class ProblemSpec(BaseModel):
    """One problem document: exactly one of `system` / `ot` is present."""

    legendre: Optional[LegendreSpec] = None
    system: Optional[SystemSpec] = None
    ot: Optional[OtSpec] = None
    sketch: Optional[SketchSpec] = None
    x0: Optional[list[float]] = None
    control: ControlSpec = Field(default_factory=ControlSpec)
    options: OptionsSpec = Field(default_factory=OptionsSpec)

    def to_document(self) -> dict:
        return self.model_dump(exclude_none=True)


class TraceRecordModel(BaseModel):
    k: int
    xi: int
    d_sel: float
    res: float
    DC: Optional[float] = None
    t_ms: float


class SolveSummaryModel(BaseModel):
    status: str
    iterations: int
    final_residual: float
    DC_final: Optional[float] = None
    global_rate: Optional[float] = None
    tail_rate: Optional[float] = None


class SolveResponse(BaseModel):
    summary: SolveSummaryModel
    trace: list[TraceRecordModel]
    x_final: list[float]


class RatesRequest(BaseModel):
    problem: ProblemSpec
    trace_dc: Optional[list[float]] = None


class RatesResponse(BaseModel):
    gamma_random: float
    gamma_greedy_lower: float
    gamma_greedy_estimate: float
    local_random_rate: float
    local_greedy_rate: float
    assumptions_hold: bool
    assumption_sup_norm: float
    exactness: Optional[bool] = None
    sigma_kaczmarz_greedy: Optional[float] = None
    sigma_kaczmarz_random: Optional[float] = None
    observed_global_rate: Optional[float] = None
    observed_tail_rate: Optional[float] = None
    notes: list[str] = Field(default_factory=list)


class BenchRequest(BaseModel):
    problem: ProblemSpec
    trials: int = 100
    seed: int = 0


class BenchControlStats(BaseModel):
    control: str
    trials: int
    mean_dc_per_step: list[float]
    mean_step_ratio: float


class BenchResponse(BaseModel):
    trials: int
    seed: int
    requested_control: str
    results: list[BenchControlStats]
    mean_ratio_by_control: dict[str, float]


class OtRequest(BaseModel):
    ot: OtSpec
    algo: OtAlgo = "sinkhorn"
    seed: int = 0
    options: OptionsSpec = Field(default_factory=OptionsSpec)


class OtResponse(BaseModel):
    summary: SolveSummaryModel
    trace: list[TraceRecordModel]
    shape: list[int]
    plan: list[float]
