"""Hand-derived gradients, checked against central finite differences.

Every forward variant has an analytic reverse-mode counterpart; the checker
perturbs each parameter coordinate and compares.  The loss is a seeded random
linear functional of the output so every output coordinate is exercised.
"""

from lambdakit import (
    LambdaConfig,
    MaskSpec,
    build_causal_mask,
    gradient_check,
    init_params,
    init_multihead_params,
    seq,
    stream,
)

base = dict(d_in=4, d_out=4, k=3, h=2, geometry=seq(5))
cases = [
    ("global", LambdaConfig(**base), None),
    ("conv", LambdaConfig(**{**base, "scope": (3,), "impl": "conv"}), None),
    ("masked", LambdaConfig(**base), MaskSpec(build_causal_mask(5))),
    ("intra_depth", LambdaConfig(**{**base, "u": 3}), None),
    ("multihead", LambdaConfig(**base), None),
    ("content_only", LambdaConfig(**base), None),
]

for variant, config, mask in cases:
    if variant == "multihead":
        params = init_multihead_params(config, seed=5)
    else:
        params = init_params(config, seed=5)
    X = stream(5, f"demo/{variant}").standard_normal((2, config.geometry.size, config.d_in))
    report = gradient_check(variant, X, params, config, seed=5, mask=mask)
    print(f"{variant:13s} max relative error vs finite differences: {report.max_rel_err:.2e}")
