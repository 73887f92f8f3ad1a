"""Problem-file handling: one JSON document describes a generator, a
constraint family (a linear system, optionally sketched, or an optimal
transport instance), a control scheme, and solve options.

The same schema backs the service request models and the CLI, so a file
validated by one is accepted by the other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import legendre, ot
from .controls import ControlScheme
from .geometry import DualSolveOptions, load_matrix_market
from .sketch import SketchFamily
from .solver import FeasibilityProblem, SolveOptions

__all__ = ["LoadedProblem", "build", "build_options", "load_file", "parse_sketch_flag"]


@dataclass
class LoadedProblem:
    problem: FeasibilityProblem
    scheme: ControlScheme
    options: SolveOptions
    kind: str  # "system" | "ot"
    ot_problem: ot.OtProblem | None = None
    sketch: SketchFamily | None = None


def load_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def parse_sketch_flag(text: str) -> dict:
    """Parse `rows`, `blocks:<tau>`, or `gaussian:<count>,<tau>`."""
    head, _, rest = text.partition(":")
    if head == "rows":
        return {"kind": "rows"}
    if head == "blocks":
        return {"kind": "blocks", "tau": int(rest)}
    if head == "gaussian":
        count, tau = rest.split(",")
        return {"kind": "gaussian", "count": int(count), "tau": int(tau)}
    raise ValueError(f"unknown sketch spec {text!r}")


def _build_sketch(spec: dict, A, b) -> SketchFamily:
    kind = spec.get("kind", "rows")
    if kind == "rows":
        return SketchFamily.rows(A, b)
    if kind in ("blocks", "row_blocks"):
        return SketchFamily.row_blocks(A, b, int(spec["tau"]))
    if kind == "gaussian":
        return SketchFamily.gaussian(A, b, int(spec["count"]), int(spec["tau"]),
                                     int(spec.get("seed", 0)))
    raise ValueError(f"unknown sketch kind {kind!r}")


def build_options(spec: dict | None) -> SolveOptions:
    spec = spec or {}
    dual = DualSolveOptions(residual_tolerance=float(spec.get("inner_tolerance", 1e-10)))
    return SolveOptions(
        max_iterations=int(spec.get("max_iterations", 10_000)),
        stop_residual=float(spec.get("stop_residual", 1e-8)),
        trace_every=int(spec.get("trace_every", 1)),
        compute_dc_trace=bool(spec.get("dc_trace", False)),
        store_iterates=bool(spec.get("store_iterates", False)),
        dual=dual,
    )


def _build_control(spec: dict | None, m: int) -> ControlScheme:
    if not spec:
        return ControlScheme.greedy()
    kind = spec.get("control", "greedy")
    seed = int(spec.get("seed", 0))
    mu = spec.get("mu")
    if kind in ("random", "adaptive"):
        if mu is None:
            mu = np.full(m, 1.0 / m)
        return ControlScheme(kind, mu, seed)
    return ControlScheme(kind)


def _system_arrays(spec: dict) -> tuple[np.ndarray, np.ndarray]:
    if "mm_path" in spec and spec["mm_path"]:
        A = load_matrix_market(spec["mm_path"])
        if spec.get("b_path"):
            b = load_matrix_market(spec["b_path"]).ravel()
        else:
            b = np.asarray(spec["b"], dtype=float)
    else:
        A = np.asarray(spec["A"], dtype=float)
        b = np.asarray(spec["b"], dtype=float)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ValueError("system matrix/vector shapes are inconsistent")
    return A, b


def build(spec: dict) -> LoadedProblem:
    """Assemble the runtime objects described by a problem document.

    Exactly one of `system` / `ot` must be present.  When x0 is omitted it
    defaults to the generator's gradient-zero point (the kernel for OT
    instances); generators without one (e.g. Burg) then need an explicit x0.
    """
    has_system = bool(spec.get("system"))
    has_ot = bool(spec.get("ot"))
    if has_system == has_ot:
        raise ValueError("exactly one of 'system' or 'ot' must be given")
    options = build_options(spec.get("options"))

    if has_ot:
        prob = ot.OtProblem.from_json(spec["ot"])
        fp = ot.coupling_problem(prob)
        if spec.get("x0") is not None:
            fp = FeasibilityProblem(fp.f, fp.sets, np.asarray(spec["x0"], dtype=float))
        scheme = _build_control(spec.get("control"), fp.m)
        return LoadedProblem(fp, scheme, options, "ot", ot_problem=prob)

    if spec.get("legendre") is None:
        raise ValueError("a linear system needs a 'legendre' block")
    f = legendre.from_json(spec["legendre"])
    A, b = _system_arrays(spec["system"])
    if A.shape[1] != f.dim:
        raise ValueError("system width does not match the generator dimension")
    family = _build_sketch(spec["sketch"], A, b) if spec.get("sketch") else SketchFamily.rows(A, b)
    sets = family.build_sets()
    if spec.get("x0") is not None:
        x0 = np.asarray(spec["x0"], dtype=float)
    else:
        x0 = f.grad_zero()
        if x0 is None:
            raise ValueError(f"{f.kind} has no gradient-zero point; provide x0")
    fp = FeasibilityProblem(f, sets, x0)
    scheme = _build_control(spec.get("control"), fp.m)
    return LoadedProblem(fp, scheme, options, "system", sketch=family)
