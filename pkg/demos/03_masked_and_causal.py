"""Masked lambdas: per-query contexts without per-example attention maps.

A shared [n, m] mask restricts which context positions each query may use.
Keys are renormalized per query over the surviving positions, so each query
gets its own content lambda -- still without materializing any [b, h, n, m]
buffer.  With a causal mask, outputs are bit-for-bit independent of the
future.
"""

import numpy as np

from lambdakit import (
    LambdaConfig,
    MaskSpec,
    build_causal_mask,
    init_params,
    masked_lambda_forward,
    seq,
    stream,
)

n = 8
config = LambdaConfig(d_in=6, d_out=8, k=2, h=4, geometry=seq(n))
params = init_params(config, seed=11)
X = stream(11, "demo/x").standard_normal((2, n, 6))

mask = MaskSpec(build_causal_mask(n))
log = []
Y = masked_lambda_forward(X, None, params, config, mask, alloc_log=log)

print("causal mask row sums:", mask.mask.sum(axis=1).astype(int))
print("largest transient buffer:", max(size for _, _, size in log), "elements")
print("a [b, h, n, m] attention map would be:", 2 * config.h * n * n, "elements")

# Rewrite the future completely; everything up to the cut is bit-identical.
X_tampered = X.copy()
X_tampered[:, 5:, :] = 1e6
Y_tampered = masked_lambda_forward(X_tampered, None, params, config, mask)
print("outputs before the cut bit-identical:", np.array_equal(Y[:, :5], Y_tampered[:, :5]))
print("outputs after the cut changed       :", not np.allclose(Y[:, 5:], Y_tampered[:, 5:]))
