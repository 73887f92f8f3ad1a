"""Thin command-line client for the solver service.

Subcommands build the same pydantic requests the HTTP endpoints accept and
either call the handlers in-process (default) or POST them to a running
service (--server).  Outputs are written with sorted keys and shortest
round-trip float repr, so identical inputs and seeds produce byte-identical
files.

Exit codes: 0 converged / ok, 2 iteration budget exhausted, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .geometry import ProjectionError
from .problems import load_file, parse_sketch_flag
from .service import (handle_bench, handle_ot, handle_rates, handle_solve)
from .service.schemas import (BenchRequest, OtRequest, ProblemSpec,
                              RatesRequest)

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
    if resp.status_code != 200:
        raise RuntimeError(f"service returned {resp.status_code}: {resp.text}")
    return resp.json()


def _call(args, path: str, handler, request_model) -> dict:
    if args.server:
        return _post(args.server, path, request_model.model_dump())
    return handler(request_model).model_dump()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _dump_trace(records: list[dict], path: Path) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _dump_csv(records: list[dict], path: Path) -> None:
    rows = ["k,DC"]
    rows += [f"{r['k']},{r['DC']!r}" for r in records if r.get("DC") is not None]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _apply_overrides(doc: dict, args) -> dict:
    options = dict(doc.get("options") or {})
    control = dict(doc.get("control") or {})
    if getattr(args, "control", None):
        control["control"] = args.control
    if getattr(args, "seed", None) is not None:
        control["seed"] = args.seed
    if getattr(args, "max_iter", None) is not None:
        options["max_iterations"] = args.max_iter
    if getattr(args, "tol", None) is not None:
        options["stop_residual"] = args.tol
    if getattr(args, "trace_every", None) is not None:
        options["trace_every"] = args.trace_every
    if getattr(args, "dc_trace", False):
        options["dc_trace"] = True
    if getattr(args, "sketch", None):
        doc["sketch"] = parse_sketch_flag(args.sketch)
    if control:
        doc["control"] = control
    if options:
        doc["options"] = options
    return doc


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_solve(args) -> int:
    doc = _apply_overrides(load_file(args.problem), args)
    spec = ProblemSpec.model_validate(doc)
    data = _call(args, "/solve", handle_solve, spec)
    out = _out_dir(args)
    _dump_trace(data["trace"], out / "trace.jsonl")
    _dump_json({"summary": data["summary"], "x_final": data["x_final"]},
               out / "summary.json")
    if args.csv:
        _dump_csv(data["trace"], out / "dc.csv")
    s = data["summary"]
    print(f"status={s['status']} iterations={s['iterations']} "
          f"residual={s['final_residual']:.3e}")
    return EXIT_OK if s["status"] == "converged" else EXIT_BUDGET


def _cmd_rates(args) -> int:
    doc = _apply_overrides(load_file(args.problem), args)
    trace_dc = None
    if args.trace:
        trace_dc = []
        with open(args.trace, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("DC") is not None:
                    trace_dc.append(rec["DC"])
    req = RatesRequest(problem=ProblemSpec.model_validate(doc), trace_dc=trace_dc)
    data = _call(args, "/rates", handle_rates, req)
    _dump_json(data, _out_dir(args) / "rates.json")
    rows = [
        ("gamma_random", data["gamma_random"]),
        ("gamma_greedy (lower)", data["gamma_greedy_lower"]),
        ("gamma_greedy (estimate)", data["gamma_greedy_estimate"]),
        ("predicted local rate, random", data["local_random_rate"]),
        ("predicted local rate, greedy", data["local_greedy_rate"]),
    ]
    if data.get("sigma_kaczmarz_random") is not None:
        rows.append(("sigma_kaczmarz_random", data["sigma_kaczmarz_random"]))
        rows.append(("sigma_kaczmarz_greedy", data["sigma_kaczmarz_greedy"]))
    if data.get("observed_tail_rate") is not None:
        rows.append(("observed global rate", data["observed_global_rate"]))
        rows.append(("observed tail rate", data["observed_tail_rate"]))
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value:.6f}")
    if data.get("exactness") is not None:
        print(f"{'sketch exactness':<{width}}  {data['exactness']}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    doc = _apply_overrides(load_file(args.problem), args)
    req = BenchRequest(problem=ProblemSpec.model_validate(doc),
                       trials=args.trials, seed=args.seed or 0)
    data = _call(args, "/bench", handle_bench, req)
    _dump_json(data, _out_dir(args) / "bench.json")
    for stats in data["results"]:
        print(f"control={stats['control']} trials={stats['trials']} "
              f"mean_step_ratio={stats['mean_step_ratio']:.4f}")
    return EXIT_OK


def _cmd_ot(args) -> int:
    doc = load_file(args.problem)
    if "ot" not in doc:
        raise ValueError("the 'ot' subcommand needs a problem file with an 'ot' block")
    options = dict(doc.get("options") or {})
    if args.max_iter is not None:
        options["max_iterations"] = args.max_iter
    if args.tol is not None:
        options["stop_residual"] = args.tol
    req = OtRequest(ot=doc["ot"], algo=args.algo, seed=args.seed or 0,
                    options=options)
    data = _call(args, "/ot", handle_ot, req)
    out = _out_dir(args)
    _dump_trace(data["trace"], out / "trace.jsonl")
    _dump_json({"summary": data["summary"], "shape": data["shape"],
                "plan": data["plan"]}, out / "plan.json")
    if args.csv:
        _dump_csv(data["trace"], out / "dc.csv")
    s = data["summary"]
    print(f"algo={args.algo} status={s['status']} iterations={s['iterations']} "
          f"marginal_residual={s['final_residual']:.3e}")
    return EXIT_OK if s["status"] == "converged" else EXIT_BUDGET


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app as asgi_app

    uvicorn.run(asgi_app, host=args.host, port=args.port)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bregproj",
                                description="Bregman-projection feasibility solver")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--server", help="base URL of a running service; "
                                         "default runs in-process")
        sp.add_argument("--out", help="output directory (default .)")

    sp = sub.add_parser("solve", help="run one solve, emit trace and summary")
    sp.add_argument("problem", help="problem JSON file")
    sp.add_argument("--control", choices=["cyclic", "greedy", "random", "adaptive"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--trace-every", type=int, dest="trace_every")
    sp.add_argument("--dc-trace", action="store_true", dest="dc_trace")
    sp.add_argument("--sketch", help="rows | blocks:<tau> | gaussian:<count>,<tau>")
    sp.add_argument("--csv", action="store_true",
                    help="also emit per-step distance-to-intersection CSV")
    common(sp)
    sp.set_defaults(fn=_cmd_solve)

    sp = sub.add_parser("rates", help="predicted local rates for a problem")
    sp.add_argument("problem")
    sp.add_argument("--trace", help="trace JSONL to compare observed rates")
    sp.add_argument("--sketch")
    common(sp)
    sp.set_defaults(fn=_cmd_rates)

    sp = sub.add_parser("bench", help="Monte-Carlo trials for random/adaptive controls")
    sp.add_argument("problem")
    sp.add_argument("--trials", "-T", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--control", choices=["random", "adaptive"])
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    sp.add_argument("--tol", type=float)
    common(sp)
    sp.set_defaults(fn=_cmd_bench)

    sp = sub.add_parser("ot", help="entropic optimal transport solves")
    sp.add_argument("problem")
    sp.add_argument("--algo", choices=["sinkhorn", "greenkhorn", "random", "adaptive"],
                    default="sinkhorn")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--csv", action="store_true")
    common(sp)
    sp.set_defaults(fn=_cmd_ot)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, ProjectionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:  # console-script hook
    sys.exit(main())
