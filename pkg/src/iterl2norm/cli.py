"""Command-line benchmark harness.

Subcommands: precision, convergence, compare-fisr, latency, normalize.
Exit codes: 0 success, 2 usage error, 3 data error, 4 range error
(squared-norm overflow).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DataFormatError, RangeOverflowError, UsageError
from .experiments import (
    CONVERGENCE_STEPS,
    ExperimentSpec,
    run_compare_fisr,
    run_convergence,
    run_latency,
    run_normalize,
    run_precision,
    write_csv,
)
from .latency import StageCosts, stage_costs_from_dict
from .norm_core import DEFAULT_STEPS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RANGE = 4


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iterl2norm",
        description="Iterative division-free layer normalization benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, formats: bool = True) -> None:
        if formats:
            p.add_argument("--format", action="append", dest="formats",
                           choices=["fp32", "fp16", "bf16"],
                           help="target format; repeatable")
        p.add_argument("--dims", type=_int_list, default=None,
                       help="comma-separated vector lengths")
        p.add_argument("--num-vectors", type=int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", type=_int_list, default=None,
                       help=f"iteration steps (default {DEFAULT_STEPS}); "
                            "a comma list sweeps step counts for `convergence`")
        p.add_argument("--lambda", dest="lambda_override", type=float, default=None,
                       help="override the per-vector default update rate")
        p.add_argument("--delta-max", type=float, default=None,
                       help="threshold stopping: iterate until |da| <= DELTA_MAX")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--config", default=None,
                       help="JSON config: stage costs, FISR magic/newton overrides")

    common(sub.add_parser("precision", help="error vs the binary64 reference"))
    common(sub.add_parser("convergence", help="error vs iteration steps"))
    common(sub.add_parser("compare-fisr", help="paired table against FISR"))
    common(sub.add_parser("latency", help="macro cycle counts"), formats=False)

    p_norm = sub.add_parser("normalize", help="normalize vectors from a file")
    common(p_norm)
    p_norm.add_argument("--input", required=True, help="vector file (text or binary)")
    p_norm.add_argument("--gamma", default=None, help="scale parameter file")
    p_norm.add_argument("--beta", default=None, help="shift parameter file")
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return data


def _build_spec(args: argparse.Namespace) -> ExperimentSpec:
    cfg = _load_config(args.config)
    costs = stage_costs_from_dict(cfg.get("stage_costs", {})) if cfg.get("stage_costs") \
        else StageCosts()
    fisr_cfg = cfg.get("fisr", {})
    magic = {}
    for name in ("fp32", "bf16"):
        if f"{name}_magic" in fisr_cfg:
            magic[name] = int(fisr_cfg[f"{name}_magic"], 0) \
                if isinstance(fisr_cfg[f"{name}_magic"], str) else int(fisr_cfg[f"{name}_magic"])
    kind = args.command
    formats = tuple(args.formats) if getattr(args, "formats", None) else None
    if formats is None:
        if kind == "compare-fisr":
            formats = ("fp32", "bf16")
        elif kind == "normalize":
            formats = ()  # binary headers carry their own format; text defaults to fp32
        else:
            formats = ("fp32", "fp16", "bf16")
    steps = tuple(args.steps) if args.steps else None
    if steps is None:
        steps = CONVERGENCE_STEPS if kind == "convergence" else (DEFAULT_STEPS,)
    return ExperimentSpec(
        kind=kind,
        formats=formats,
        dims=tuple(args.dims) if args.dims else (),
        num_vectors=args.num_vectors,
        seed=args.seed,
        steps=steps,
        lambda_override=args.lambda_override,
        delta_max=args.delta_max,
        input_path=getattr(args, "input", None),
        output_path=args.out,
        stage_costs=costs,
        fisr_newton_iters=int(fisr_cfg.get("newton_iters", 1)),
        fisr_magic=magic,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _build_spec(args)
        if args.command == "normalize":
            summary = run_normalize(spec, gamma_path=args.gamma, beta_path=args.beta)
            print(f"normalized {summary.count} vectors -> {summary.output_path} "
                  f"(diagnostics: {summary.sidecar_path})")
            return EXIT_OK
        runner = {
            "precision": run_precision,
            "convergence": run_convergence,
            "compare-fisr": run_compare_fisr,
            "latency": run_latency,
        }[args.command]
        result = runner(spec)
        text = write_csv(result, args.out)
        if args.out is None:
            sys.stdout.write(text)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RangeOverflowError as exc:
        print(f"range error: {exc}", file=sys.stderr)
        return EXIT_RANGE


def entrypoint() -> None:  # console_scripts shim
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
