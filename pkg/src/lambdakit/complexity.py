"""Closed-form multiply counts and byte footprints for long-range layers.

Costs are exact leading-term *multiply* counts (not FLOPs; use ``to_flops``
for the mul+add presentation) and match the instrumented loop references in
``oracles`` integer-for-integer.  Projections, additions, exponentials and
normalizing divisions are outside the counting boundary.

The memory model reproduces the reference per-backbone accounting: per stage
of a backbone with ``layers`` lambda (or attention) layers at spatial side s,
the context is the full feature map (n = m = s*s) and

    attention        b * h * l * n^2           per-example maps, per layer
    axial attention  2 * b * h * l * n * s     row + column maps
    lambda           k * l * n^2               expanded embeddings, no batch term
    lambda (shared)  k * n^2                   one table per distinct side
    lambda conv      k * r * l                 compact kernel only

in elements, times bytes_per_element (4 for the reference full-precision
numbers).  Lambda activations (b*n*k*v per layer) are tracked as a separate
term and excluded from table totals, since they match the activation
footprint of the surrounding network.  Reference values follow the GiB
(2^30) convention; both GiB and GB are reported because the reference
rounding does not distinguish them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

GIB = 2**30
GB = 10**9

TIME_KINDS = (
    "lambda",
    "lambda_conv",
    "multihead_lambda",
    "intra_depth_lambda",
    "masked_lambda",
    "content_only",
    "attention",
    "relative_attention",
    "linear_attention",
)

SPACE_KINDS = (
    "lambda",
    "lambda_shared",
    "lambda_conv",
    "multihead_lambda",
    "intra_depth_lambda",
    "attention",
    "relative_attention",
    "linear_attention",
    "axial_attention",
)


@dataclass(frozen=True)
class DimSet:
    """Dimension bundle: b batch, n/m query/context positions, r scope size,
    k query depth, v value depth (d = h*v), h heads, u intra-depth,
    l layer count."""

    b: int = 1
    n: int = 1
    m: int = 1
    k: int = 1
    h: int = 1
    v: int | None = None
    d: int | None = None
    r: int = 1
    u: int = 1
    l: int = 1
    bytes_per_element: int = 4
    mask_ones: int | None = None  # unmasked (n, m) pairs for the masked kind

    def __post_init__(self):
        v, d = self.v, self.d
        if v is None and d is None:
            raise ConfigError("DimSet needs v or d")
        if v is None:
            if d % self.h:
                raise ConfigError(f"d={d} not divisible by h={self.h}")
            object.__setattr__(self, "v", d // self.h)
        elif d is None:
            object.__setattr__(self, "d", v * self.h)
        elif d != v * self.h:
            raise ConfigError(f"d={d} != h*v={self.h * v}")
        for name in ("b", "n", "m", "k", "h", "v", "d", "r", "u", "l"):
            if getattr(self, name) < 1:
                raise ConfigError(f"dimension {name} must be >= 1")

    @property
    def z(self) -> int:
        return self.n * self.m if self.mask_ones is None else self.mask_ones


@dataclass(frozen=True)
class StageSpec:
    """Backbone stages: (layer_count, spatial side) pairs, e.g. [(3,56),(4,28),...]."""

    stages: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("stage spec must be nonempty")
        for layers, side in self.stages:
            if layers < 1:
                raise ConfigError("stage layer counts must be >= 1")
            if side < 1:
                raise ConfigError("stage spatial extents must be >= 1")

    @staticmethod
    def parse(text: str) -> "StageSpec":
        """Parse '3x56,4x28,6x14,3x7'."""
        stages = []
        for part in text.split(","):
            layers, side = part.split("x")
            stages.append((int(layers), int(side)))
        return StageSpec(tuple(stages))

    def __str__(self):
        return ",".join(f"{l}x{s}" for l, s in self.stages)


RESNET50_STAGES = StageSpec(((3, 56), (4, 28), (6, 14), (3, 7)))


@dataclass
class ComplexityReport:
    op_kind: str
    unit: str  # 'multiplies' or 'bytes'
    terms: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.terms.values())

    def to_dict(self) -> dict:
        return {
            "op_kind": self.op_kind,
            "unit": self.unit,
            "total": self.total,
            "terms": dict(self.terms),
        }


def to_flops(multiplies: int) -> int:
    """Mul+add presentation of a multiply count."""
    return 2 * multiplies


def time_cost(op_kind: str, dims: DimSet) -> ComplexityReport:
    """Exact multiply counts per stage of the named operation."""
    b, n, m, k, v, h, u, r = dims.b, dims.n, dims.m, dims.k, dims.v, dims.h, dims.u, dims.r
    d = dims.d
    if op_kind == "lambda":
        terms = {
            "generate_content": b * m * k * v,
            "generate_position": b * n * m * k * v,
            "apply": 2 * b * h * n * k * v,
        }
    elif op_kind == "lambda_conv":
        terms = {
            "generate_content": b * m * k * v,
            "generate_position": b * n * r * k * v,
            "apply": 2 * b * h * n * k * v,
        }
    elif op_kind == "multihead_lambda":
        terms = {
            "generate_content": b * h * m * k * v,
            "generate_position": b * h * n * m * k * v,
            "apply": 2 * b * h * n * k * v,
        }
    elif op_kind == "intra_depth_lambda":
        terms = {
            "generate_content": b * m * k * v * u,
            "generate_position": b * n * m * k * v * u,
            "apply": 2 * b * h * n * k * v,
        }
    elif op_kind == "masked_lambda":
        terms = {
            "generate_content": b * m * k * v,
            "generate_position": b * dims.z * k * v,
            "apply": 2 * b * h * n * k * v,
        }
    elif op_kind == "content_only":
        terms = {
            "generate_content": b * m * k * v,
            "apply": b * h * n * k * v,
        }
    elif op_kind == "attention":
        terms = {"scores": b * h * n * m * k, "weighted_sum": b * n * m * d}
    elif op_kind == "relative_attention":
        terms = {
            "scores": b * h * n * m * k,
            "position_scores": b * h * n * m * k,
            "weighted_sum": b * n * m * d,
        }
    elif op_kind == "linear_attention":
        terms = {"generate": b * m * k * d, "apply": b * n * k * d}
    else:
        raise ConfigError(f"no time model for op kind {op_kind!r}")
    return ComplexityReport(op_kind, "multiplies", terms)


def generate_cost(op_kind: str, dims: DimSet) -> int:
    rep = time_cost(op_kind, dims)
    return sum(c for s, c in rep.terms.items() if s.startswith("generate"))


def space_cost(op_kind: str, dims: DimSet) -> ComplexityReport:
    """Byte footprints; see module docstring for the per-kind terms."""
    b, n, m, k, v, h, u, r, l = (
        dims.b, dims.n, dims.m, dims.k, dims.v, dims.h, dims.u, dims.r, dims.l,
    )
    bpe = dims.bytes_per_element
    if op_kind in ("attention", "relative_attention"):
        terms = {"attention_maps": b * h * n * m * l}
    elif op_kind == "axial_attention":
        side = math.isqrt(n)
        if side * side != n:
            raise ConfigError("axial attention model needs square position counts")
        terms = {"attention_maps": 2 * b * h * n * side * l}
    elif op_kind == "linear_attention":
        terms = {"summaries": b * k * dims.d * l}
    elif op_kind == "lambda":
        terms = {"embeddings": k * n * m * l, "lambda_activations": b * n * k * v * l}
    elif op_kind == "lambda_shared":
        terms = {"embeddings": k * n * m, "lambda_activations": b * n * k * v * l}
    elif op_kind == "lambda_conv":
        terms = {"kernel": k * r * l, "lambda_activations": b * n * k * v * l}
    elif op_kind == "multihead_lambda":
        terms = {"embeddings": h * k * n * m * l, "lambda_activations": b * n * k * v * h * l}
    elif op_kind == "intra_depth_lambda":
        terms = {"embeddings": k * n * m * u * l, "lambda_activations": b * n * k * v * l}
    else:
        raise ConfigError(f"no space model for op kind {op_kind!r}")
    return ComplexityReport(op_kind, "bytes", {s: c * bpe for s, c in terms.items()})


# memory_report counts these terms toward table totals; lambda activations are
# excluded by the table's own convention.
_TABLE_TERMS = ("attention_maps", "embeddings", "kernel", "summaries")


def memory_report(
    stages: StageSpec, dims: DimSet, op_kinds: tuple[str, ...]
) -> dict:
    """Per-stage memory table for each op kind, GiB and GB totals.

    The stage side s gives n = m = s*s context positions per layer; the
    'lambda_shared' kind counts one embedding table per *distinct* side.
    """
    rows = {}
    for kind in op_kinds:
        per_stage = []
        seen_sides = set()
        total = 0
        for layers, side in stages.stages:
            n = side * side
            sdims = DimSet(
                b=dims.b, n=n, m=n, k=dims.k, h=dims.h, v=dims.v, d=None,
                r=dims.r, u=dims.u, l=layers, bytes_per_element=dims.bytes_per_element,
            )
            rep = space_cost(kind, sdims)
            stage_bytes = sum(
                c for t, c in rep.terms.items() if t in _TABLE_TERMS
            )
            if kind == "lambda_shared":
                if side in seen_sides:
                    stage_bytes = 0
                seen_sides.add(side)
            per_stage.append(
                {"layers": layers, "side": side, "bytes": int(stage_bytes)}
            )
            total += stage_bytes
        rows[kind] = {
            "bytes": int(total),
            "gib": total / GIB,
            "gb": total / GB,
            "per_stage": per_stage,
        }
    return rows
