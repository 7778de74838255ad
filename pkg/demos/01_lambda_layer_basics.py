"""Lambda layer basics: context -> linear maps -> outputs.

A lambda layer never builds an attention map.  It summarizes the context into
one k-by-v matrix per query position (content summary + relative-position
term) and applies that matrix to the query.
"""

import numpy as np

from lambdakit import (
    LambdaConfig,
    content_only_forward,
    init_params,
    lambda_layer_forward,
    position_only_forward,
    seq,
    stream,
)

config = LambdaConfig(d_in=8, d_out=8, k=4, h=2, geometry=seq(10))
params = init_params(config, seed=7)
X = stream(7, "demo/x").standard_normal((2, 10, 8))

Y = lambda_layer_forward(X, None, params, config)
print("input  [b, n, d]:", X.shape)
print("output [b, n, d]:", Y.shape)

# The output decomposes exactly into a content part (shared context summary,
# permutation-invariant) and a position part (relative structure).
Yc = content_only_forward(X, None, params, config)
Yp = position_only_forward(X, None, params, config)
print("additive decomposition max |Y - (Yc + Yp)|:", np.abs(Y - (Yc + Yp)).max())

# Content lambdas cannot see *where* anything is: permuting the context
# leaves the content-only output unchanged.
perm = np.random.default_rng(0).permutation(10)
Yc_perm = content_only_forward(X, X[:, perm], params, config)
print("content output change under context permutation:", np.abs(Yc - Yc_perm).max())

# Multi-query: one lambda serves h query slices, so the value depth is
# d_out / h and the cost drops by a factor of h versus one lambda per head.
print("heads:", config.h, " value depth v = d_out/h =", config.v)
