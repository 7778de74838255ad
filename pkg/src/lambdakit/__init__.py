"""lambdakit: lambda layers built from scratch on numpy.

A lambda layer turns a context into one small linear map per query position
(a "lambda") and applies it directly, capturing content and relative-position
interactions without materializing per-example attention maps.  The package
covers the full family -- global, local (convolutional), masked, multi-head,
intra-depth, content-only -- with hand-derived analytic gradients, a
finite-difference oracle, instrumented cost counters with matching
closed-form models, and an analytic memory model.
"""

from .complexity import (
    ComplexityReport,
    DimSet,
    RESNET50_STAGES,
    StageSpec,
    memory_report,
    space_cost,
    time_cost,
    to_flops,
)
from .conv import position_lambdas_conv, position_lambdas_depthwise
from .errors import ConfigError, NonFiniteError, ShapeError, SpecError
from .grad import GradBundle, backward, finite_diff_check, gradient_check
from .layer import (
    LambdaConfig,
    LambdaParams,
    apply_lambdas,
    content_lambda,
    init_params,
    lambda_layer_forward,
    normalize_keys,
    position_lambdas_einsum,
    project_qkv,
)
from .relpos import (
    Geometry,
    OUT_OF_SCOPE,
    RelIndexMap,
    build_causal_mask,
    build_rel_index_map,
    expand_embeddings,
    grid,
    seq,
)
from .rng import DEFAULT_SEED, stream
from .tensor import (
    FAST_DTYPE,
    REFERENCE_DTYPE,
    contract,
    contract_generic,
    elementwise,
    l2norm,
    load_tensor,
    save_tensor,
    softmax,
    tensor_from_bytes,
    tensor_to_bytes,
)
from .variants import (
    MaskSpec,
    MultiheadParams,
    content_only_forward,
    init_multihead_params,
    intra_depth_forward,
    masked_lambda_forward,
    multihead_lambda_forward,
    position_only_forward,
    tied_multihead_params,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexityReport", "DimSet", "RESNET50_STAGES", "StageSpec",
    "memory_report", "space_cost", "time_cost", "to_flops",
    "position_lambdas_conv", "position_lambdas_depthwise",
    "ConfigError", "NonFiniteError", "ShapeError", "SpecError",
    "GradBundle", "backward", "finite_diff_check", "gradient_check",
    "LambdaConfig", "LambdaParams", "apply_lambdas", "content_lambda",
    "init_params", "lambda_layer_forward", "normalize_keys",
    "position_lambdas_einsum", "project_qkv",
    "Geometry", "OUT_OF_SCOPE", "RelIndexMap", "build_causal_mask",
    "build_rel_index_map", "expand_embeddings", "grid", "seq",
    "DEFAULT_SEED", "stream",
    "FAST_DTYPE", "REFERENCE_DTYPE", "contract", "contract_generic",
    "elementwise", "l2norm", "load_tensor", "save_tensor", "softmax",
    "tensor_from_bytes", "tensor_to_bytes",
    "MaskSpec", "MultiheadParams", "content_only_forward",
    "init_multihead_params", "intra_depth_forward", "masked_lambda_forward",
    "multihead_lambda_forward", "position_only_forward", "tied_multihead_params",
]
