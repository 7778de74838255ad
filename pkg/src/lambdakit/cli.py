"""Command-line front end.

Subcommands: verify, bench, gradcheck, memmodel, train-toy.  Every report
embeds the resolved run configuration and seed (schema version 1); re-running
a report's embedded config reproduces it bit-identically apart from the
fields listed in ``timings_nondeterministic``.  Exit codes: 0 pass, 1 suite
or check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import bench as bench_mod
from . import verify as verify_mod
from .complexity import DimSet, RESNET50_STAGES, StageSpec, memory_report, to_flops
from .errors import ConfigError
from .grad import VARIANTS, gradient_check
from .layer import LambdaConfig, init_params
from .relpos import Geometry, build_causal_mask, parse_scope
from .rng import DEFAULT_SEED
from .toytask import MODES, ToyTaskSpec, init_model, marker_permutation_logit_gap, train
from .variants import MaskSpec, init_multihead_params

SCHEMA_VERSION = 1

# report fields that legitimately change between identical runs
TIMING_FIELDS = ("median_s", "p10_s", "p90_s", "elapsed_s")


def _emit(report: dict, args) -> None:
    report = {"schema": SCHEMA_VERSION, "config": _run_config(args), **report}
    report["timings_nondeterministic"] = list(TIMING_FIELDS)
    if args.format == "json":
        text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    else:
        text = _to_csv(report)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def _run_config(args) -> dict:
    return {
        k: (v if not isinstance(v, tuple) else list(v))
        for k, v in sorted(vars(args).items())
        if k != "func" and not callable(v)
    }


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, value))


def _to_csv(report: dict) -> str:
    rows: list = []
    _flatten("", report, rows)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buf.getvalue().rstrip("\n")


def strip_timings(report: dict) -> dict:
    """Drop the flagged nondeterministic fields (for reproducibility checks)."""

    def scrub(obj):
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items() if k not in TIMING_FIELDS}
        if isinstance(obj, list):
            return [scrub(v) for v in obj]
        return obj

    return scrub(report)


# --- subcommands ---------------------------------------------------------------


def cmd_verify(args) -> int:
    reports = verify_mod.run_suites(
        args.suite.split(","), args.seed, mutate=args.mutate, impl=args.impl
    )
    payload = {"suites": [r.to_dict() for r in reports]}
    failing = [name for r in reports for name in r.failing()]
    payload["failing_properties"] = failing
    _emit(payload, args)
    return 0 if not failing else 1


def cmd_gradcheck(args) -> int:
    geometry = Geometry.parse(args.geom)
    scope = parse_scope(args.scope) if args.scope else None
    impl = {"conv": "conv", "depthwise": "depthwise"}.get(args.variant, args.impl)
    config = LambdaConfig(
        d_in=args.d, d_out=args.d, k=args.k, h=args.h, geometry=geometry,
        u=args.u if args.variant == "intra-depth" else 1,
        boundary=args.boundary, scope=scope, impl=impl,
    )
    variant = args.variant.replace("-", "_")
    if variant in ("scoped", "conv", "depthwise") and scope is None:
        raise ConfigError(f"variant {args.variant} needs --scope")
    mask = None
    if variant == "masked":
        if args.mask != "causal":
            raise ConfigError("only --mask causal is built in")
        mask = MaskSpec(build_causal_mask(geometry.size))
    if variant == "multihead":
        params = init_multihead_params(config, args.seed)
    else:
        params = init_params(config, args.seed)
    from .rng import stream

    X = stream(args.seed, "gradcheck/x").standard_normal((args.b, geometry.size, args.d))
    report = gradient_check(variant, X, params, config, seed=args.seed, mask=mask)
    payload = {
        "variant": args.variant,
        "max_rel_err": report.max_rel_err,
        "tolerance": args.tolerance,
        "per_parameter": report.to_dict(),
        "passed": report.max_rel_err < args.tolerance,
    }
    _emit(payload, args)
    return 0 if payload["passed"] else 1


def cmd_memmodel(args) -> int:
    stages = StageSpec.parse(args.stages)
    dims = DimSet(b=args.b, h=args.h, k=args.k, v=args.v, u=args.u,
                  bytes_per_element=args.bytes_per_element)
    kinds = tuple(args.kinds.split(","))
    rows = memory_report(stages, dims, kinds)
    _emit({"stages": str(stages), "rows": rows}, args)
    return 0


def cmd_bench(args) -> int:
    payload: dict = {}
    if args.sweep in ("conv", "both"):
        impl = args.impl if args.impl in ("conv", "depthwise") else "conv"
        payload["conv_rows"] = bench_mod.sweep_conv(
            iterations=args.iterations, precision=args.precision, impl=impl
        )
    if args.sweep in ("global", "both"):
        payload["global_rows"] = bench_mod.sweep_global(
            iterations=args.iterations, precision=args.precision
        )
    if "conv_rows" in payload and "global_rows" in payload:
        payload["fits"] = bench_mod.scaling_fits(payload["conv_rows"], payload["global_rows"])
    elif "conv_rows" in payload:
        payload["fits"] = {
            "conv_linear": bench_mod.fit_linear(
                [r["n"] for r in payload["conv_rows"]],
                [r["p10_s"] for r in payload["conv_rows"]],
            )
        }
    elif "global_rows" in payload:
        payload["fits"] = {
            "global_loglog": bench_mod.fit_loglog(
                [r["n"] for r in payload["global_rows"]],
                [r["p10_s"] for r in payload["global_rows"]],
            )
        }
    for rows_key in ("conv_rows", "global_rows"):
        for row in payload.get(rows_key, []):
            row["flops"] = to_flops(row["multiplies"])
    _emit(payload, args)
    return 0


def cmd_train_toy(args) -> int:
    spec = ToyTaskSpec(steps=args.steps, lr=args.lr)
    seeds = [int(s) for s in args.seeds.split(",")]
    runs = []
    diverged = False
    for seed in seeds:
        rep = train(spec, seed=seed, mode=args.mode)
        diverged = diverged or rep.diverged
        runs.append({
            "seed": seed,
            "mode": rep.mode,
            "final_train_accuracy": rep.final_train_accuracy,
            "final_test_accuracy": rep.final_test_accuracy,
            "accuracy_curve": [
                {"step": s, "train": tr, "test": te} for s, tr, te in rep.curve
            ],
            "diverged": rep.diverged,
        })
    payload = {"task": dict(vars(spec)), "runs": runs}
    if args.mode == "content-only":
        model = init_model(spec, seeds[0], mode="content-only")
        payload["marker_permutation_logit_gap"] = marker_permutation_logit_gap(model, spec)
    _emit(payload, args)
    return 1 if diverged else 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lambdakit",
        description="Lambda-layer kernels: verification suites, gradient checks, "
                    "cost models, benchmarks, and a toy position-vs-content task.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"run seed (default {DEFAULT_SEED})")
        p.add_argument("--precision", choices=("reference", "fast"), default="reference")
        p.add_argument("--out", default=None, help="write the report to this path")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("verify", help="run property suites")
    common(p)
    p.add_argument("--suite", default="all",
                   help="comma list of suites or 'all' "
                        f"(known: {','.join(sorted(verify_mod.SUITES))})")
    p.add_argument("--impl", choices=("all", "einsum", "conv", "depthwise"), default="all",
                   help="which conv flavor the equivalence suite compares against einsum")
    p.add_argument("--mutate", default=None,
                   help="enable a named fault injection; the suites must catch it")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", help="finite-difference check of a variant")
    common(p)
    p.add_argument("--variant", default="global",
                   choices=[v.replace("_", "-") for v in VARIANTS])
    p.add_argument("--geom", default="seq:4", help="seq:N or grid:HxW")
    p.add_argument("--scope", default=None, help="S or SxS (odd)")
    p.add_argument("--boundary", choices=("clamped", "circular"), default="clamped")
    p.add_argument("--impl", choices=("einsum", "conv", "depthwise"), default="einsum")
    p.add_argument("--mask", default="causal")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--h", type=int, default=2)
    p.add_argument("--u", type=int, default=2)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("memmodel", help="analytic memory table")
    common(p)
    p.add_argument("--stages", default=str(RESNET50_STAGES))
    p.add_argument("--b", type=int, default=128)
    p.add_argument("--h", type=int, default=8)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--v", type=int, default=64)
    p.add_argument("--u", type=int, default=1)
    p.add_argument("--bytes-per-element", type=int, default=4)
    p.add_argument("--kinds", default="attention,axial_attention,lambda,lambda_shared")
    p.set_defaults(func=cmd_memmodel)

    p = sub.add_parser("bench", help="CPU throughput sweeps and scaling fits")
    common(p)
    p.add_argument("--sweep", choices=("conv", "global", "both"), default="both")
    p.add_argument("--impl", choices=("einsum", "conv", "depthwise"), default="conv")
    p.add_argument("--iterations", type=int, default=30)
    p.set_defaults(func=cmd_bench, precision="fast")

    p = sub.add_parser("train-toy", help="train the marker-quadrant toy task")
    common(p)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--steps", type=int, default=ToyTaskSpec.steps)
    p.add_argument("--lr", type=float, default=ToyTaskSpec.lr)
    p.add_argument("--seeds", default="1,2,3")
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
