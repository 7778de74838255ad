"""Closed-form cost models, validated against instrumented loop counters.

Multiply counts are exact (not asymptotic): the same numbers fall out of
counting every scalar multiply in the reference loop kernels.  The memory
model reproduces the reference per-backbone accounting from the stage
geometry alone.
"""

from lambdakit import DimSet, RESNET50_STAGES, StageSpec, memory_report, time_cost
from lambdakit.oracles import counted_lambda_kernel
from lambdakit.layer import normalize_keys
from lambdakit.rng import stream

dims = DimSet(b=2, n=4, m=4, k=3, v=2, h=2)
model = time_cost("lambda", dims)
print("model multiply counts:", model.terms)

Q = stream(1, "demo/q").standard_normal((2, 2, 4, 3))
Kn = normalize_keys(stream(1, "demo/k").standard_normal((2, 4, 3)), "softmax")
E = stream(1, "demo/e").standard_normal((4, 4, 3))
V = stream(1, "demo/v").standard_normal((2, 4, 2))
_, counter = counted_lambda_kernel(Q, Kn, E, V)
print("instrumented counts  :", counter.stages)
print("exact match:", counter.stages == model.terms)

# Doubling the head count at fixed output width halves the generate cost.
for h in (2, 4):
    d = 16
    rep = time_cost("lambda", DimSet(b=8, n=64, m=64, k=16, h=h, d=d))
    gen = rep.terms["generate_content"] + rep.terms["generate_position"]
    print(f"h={h}: generate={gen:,} apply={rep.terms['apply']:,}")

# Memory for a 224x224 ResNet-50 backbone, batch 128, full precision.
rows = memory_report(
    RESNET50_STAGES,
    DimSet(b=128, h=8, k=16, v=64),
    ("attention", "axial_attention", "lambda", "lambda_shared"),
)
print(f"\nstages {RESNET50_STAGES}:")
for kind, row in rows.items():
    print(f"  {kind:18s} {row['gib']:8.2f} GiB")

foot = memory_report(StageSpec(((1, 64),)), DimSet(b=128, h=8, k=16, v=64), ("attention",))
print("one global-attention layer on 64x64 inputs, batch 128:",
      foot["attention"]["gib"], "GiB")
