"""Local position lambdas: one contract, three implementations.

Restricting position interactions to a window can be written as (a) the
global contraction with out-of-window embeddings zeroed, (b) a regular
convolution that treats the value depth as an extra spatial axis, or (c) a
depthwise convolution with channel multiplier.  All three agree; the two
convolutions agree bit-for-bit.
"""

import numpy as np

from lambdakit import (
    build_rel_index_map,
    expand_embeddings,
    grid,
    position_lambdas_conv,
    position_lambdas_depthwise,
    position_lambdas_einsum,
    stream,
)

geometry = grid(6, 6)
scope = (3, 3)
index_map = build_rel_index_map(geometry, scope=scope)
print("grid:", geometry, " scope:", scope, " buckets:", index_map.num_buckets)

R = stream(3, "demo/rel").standard_normal((index_map.num_buckets, 4))
V = stream(3, "demo/v").standard_normal((2, geometry.size, 5))

lam_einsum = position_lambdas_einsum(expand_embeddings(index_map, R), V)
lam_conv = position_lambdas_conv(R, V, scope, geometry)
lam_depthwise = position_lambdas_depthwise(R, V, scope, geometry)

print("einsum vs conv      :", np.abs(lam_einsum - lam_conv).max())
print("conv vs depthwise   : bit-identical =", np.array_equal(lam_conv, lam_depthwise))

# The scoped window with zero padding is also why interior positions are
# exactly shift-equivariant: shifting the values shifts interior lambdas.
n = 12
from lambdakit import seq  # noqa: E402

R1 = stream(3, "demo/rel1d").standard_normal((3, 2))
V1 = stream(3, "demo/v1d").standard_normal((1, n, 2))
V_shift = np.zeros_like(V1)
V_shift[:, 2:] = V1[:, : n - 2]
a = position_lambdas_conv(R1, V1, (3,), seq(n))
b = position_lambdas_conv(R1, V_shift, (3,), seq(n))
print("interior equivariance, bitwise:", np.array_equal(b[:, 3 : n - 1], a[:, 1 : n - 3]))
