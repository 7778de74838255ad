"""CPU throughput microbenchmarks and scaling-shape fits.

Timings are desk-scale wall-clock medians (plus p10/p90) over repeated
forward calls after warmup; medians, never means, since scheduler noise is
one-sided.  Each sweep row carries the closed-form multiply count of the
timed kernel so time-per-multiply is comparable across variants (the count
model is verified against instrumented loop counters elsewhere).  The timing
loop is plain single-threaded numpy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .complexity import DimSet, time_cost
from .layer import LambdaConfig, init_params
from .relpos import seq
from .rng import stream
from .tensor import FAST_DTYPE, REFERENCE_DTYPE


@dataclass
class TimingStats:
    median_s: float
    p10_s: float
    p90_s: float
    iterations: int


def time_fn(fn, warmup: int = 5, iterations: int = 30) -> TimingStats:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    arr = np.array(samples)
    return TimingStats(
        median_s=float(np.median(arr)),
        p10_s=float(np.percentile(arr, 10)),
        p90_s=float(np.percentile(arr, 90)),
        iterations=iterations,
    )


def _cast_params(params, dtype):
    out = params.copy()
    out.w_q = out.w_q.astype(dtype)
    out.w_k = out.w_k.astype(dtype)
    out.w_v = out.w_v.astype(dtype)
    out.rel = out.rel.astype(dtype)
    return out


def _warm_allocator():
    # glibc's mmap threshold adapts upward only when freed chunks are below
    # its 32 MiB cap; cycling ascending buffers once keeps multi-MB workspace
    # allocations on the reusable heap instead of fresh mmaps (page-fault
    # storms that read as phantom super-linear scaling).
    for mb in (2, 4, 8, 16, 24, 31):
        buf = np.ones(mb * 2**20 // 8)
        del buf


def _sweep(ns, impl, scope, b, k, h, d, precision, seed, warmup, iterations):
    """Time the position-lambda stage per n, in block-interleaved passes.

    The sweeps time the stage the ``impl`` flag selects (embedding expansion
    plus contraction for einsum, the tap loop for conv/depthwise): content
    lambda, projections and lambda application are impl-independent linear
    work that would only dilute the scaling shape under test.  Blocks re-warm
    their own working set (big cases evict small ones from cache), and
    cycling passes spreads slow system phases across all sweep points.
    """
    from .conv import position_lambdas_conv, position_lambdas_depthwise
    from .layer import config_index_map, position_lambdas_einsum
    from .relpos import expand_embeddings

    dtype = FAST_DTYPE if precision == "fast" else REFERENCE_DTYPE
    _warm_allocator()
    cases = []
    for n in ns:
        config = LambdaConfig(
            d_in=d, d_out=d, k=k, h=h, geometry=seq(n), scope=scope, impl=impl
        )
        params = _cast_params(init_params(config, seed), dtype)
        V = stream(seed, f"bench/v/{n}").standard_normal((b, n, config.v)).astype(dtype)
        if impl == "einsum":
            index_map = config_index_map(config)
            rel = params.rel

            def call(index_map=index_map, rel=rel, V=V):
                return position_lambdas_einsum(expand_embeddings(index_map, rel), V)

        else:
            fn = position_lambdas_conv if impl == "conv" else position_lambdas_depthwise

            def call(fn=fn, rel=params.rel, V=V, scope=scope, g=config.geometry):
                return fn(rel, V, scope, g)

        cases.append((n, call))
    times: dict[int, list[float]] = {n: [] for n in ns}
    passes = 3
    block = -(-iterations // passes)
    for _ in range(passes):
        for n, call in cases:
            for _ in range(warmup):
                call()
            for _ in range(block):
                t0 = time.perf_counter()
                call()
                times[n].append(time.perf_counter() - t0)
    rows = []
    for n in ns:
        arr = np.array(times[n])
        r = int(np.prod(scope)) if scope else 2 * n - 1
        kind = "lambda" if impl == "einsum" and scope is None else "lambda_conv"
        dims = DimSet(b=b, n=n, m=n, k=k, h=h, d=d, r=r)
        rows.append({
            "n": n,
            "impl": impl,
            "scope": list(scope) if scope else None,
            "median_s": float(np.median(arr)),
            "p10_s": float(np.percentile(arr, 10)),
            "p90_s": float(np.percentile(arr, 90)),
            "iterations": len(arr),
            "multiplies": time_cost(kind, dims).terms["generate_position"],
        })
    return rows


def sweep_conv(
    ns=(64, 128, 256, 512, 768, 1024),
    scope=(5,),
    b=16,
    k=8,
    h=2,
    d=16,
    precision="fast",
    seed=0,
    warmup=5,
    iterations=30,
    impl="conv",
):
    """Local-scope sweep over sequence length; expected linear in n."""
    return _sweep(ns, impl, tuple(scope), b, k, h, d, precision, seed, warmup, iterations)


def sweep_global(
    ns=(181, 256, 362, 512, 724),
    b=32,
    k=8,
    h=2,
    d=16,
    precision="fast",
    seed=0,
    warmup=5,
    iterations=30,
):
    """Global einsum sweep over sequence length; expected ~quadratic in n."""
    return _sweep(ns, "einsum", None, b, k, h, d, precision, seed, warmup, iterations)


def scaling_fits(conv_rows, global_rows) -> dict:
    """Scaling-shape fits for the two sweeps.

    Fits use the per-point p10, not the median: timing noise on a shared CPU
    is one-sided (contention only adds time), so a low quantile estimates the
    uncontended cost.  Reported medians stay medians.
    """
    conv = fit_linear([r["n"] for r in conv_rows], [r["p10_s"] for r in conv_rows])
    glob = fit_loglog([r["n"] for r in global_rows], [r["p10_s"] for r in global_rows])
    return {"conv_linear": conv, "global_loglog": glob}


def fit_linear(xs, ys) -> dict:
    """Least-squares y = a*x + c with coefficient of determination."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    a, c = np.polyfit(xs, ys, 1)
    pred = a * xs + c
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    return {"slope": float(a), "intercept": float(c), "r2": 1.0 - ss_res / ss_tot}


def fit_loglog(xs, ys) -> dict:
    """Power-law fit: slope of log y against log x."""
    fit = fit_linear(np.log(xs), np.log(ys))
    return {"slope": fit["slope"], "r2": fit["r2"]}
