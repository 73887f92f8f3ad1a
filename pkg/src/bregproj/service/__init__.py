"""Service layer: pydantic request/response schemas and the FastAPI app."""

from .app import app, handle_bench, handle_ot, handle_rates, handle_solve
from .schemas import (BenchRequest, BenchResponse, OtRequest, OtResponse,
                      ProblemSpec, RatesRequest, RatesResponse, SolveResponse)

__all__ = [
    "app",
    "handle_solve",
    "handle_rates",
    "handle_bench",
    "handle_ot",
    "ProblemSpec",
    "RatesRequest",
    "RatesResponse",
    "BenchRequest",
    "BenchResponse",
    "OtRequest",
    "OtResponse",
    "SolveResponse",
]
