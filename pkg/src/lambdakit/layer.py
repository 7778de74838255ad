"""The multi-query lambda layer.

A lambda layer summarizes a context into one linear map per query position
and applies it directly:

    lambda_n = sum_m (kbar_m + e_nm) v_m^T   (content + position lambdas)
    y_n      = lambda_n^T q_n

Keys are normalized across context positions (softmax by default), so the
content lambda is a permutation-invariant context summary shared by all
queries, while position lambdas carry relative structure through the
embedding table.  The multi-query trick applies the same lambda to h query
slices and concatenates, so the value depth is v = d_out / h.

Axis labels used throughout: b batch, n query positions, m context positions,
k query/key depth, v value depth, h heads (query count), u intra-depth,
d channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import mutation
from .errors import ConfigError, ShapeError
from .relpos import Geometry, RelIndexMap, build_rel_index_map, expand_embeddings
from .rng import DEFAULT_SEED, stream
from .tensor import contract, l2norm, softmax

KEY_NORMS = ("softmax", "l2", "none")
IMPLS = ("einsum", "conv", "depthwise")


@dataclass(frozen=True)
class LambdaConfig:
    """Hyperparameters of one lambda layer; see module docstring for symbols."""

    d_in: int
    d_out: int
    k: int
    h: int
    geometry: Geometry
    u: int = 1
    boundary: str = "clamped"
    scope: tuple[int, ...] | None = None
    key_norm: str = "softmax"
    qv_hook: bool = False
    impl: str = "einsum"
    # softmax axis choice for intra-depth keys: 'joint' normalizes over (m, u)
    # so each (b, k) slice carries total mass 1; 'per_u' normalizes over m
    # independently per intra-depth slice.
    intra_softmax: str = "joint"

    def __post_init__(self):
        if self.d_out % self.h != 0:
            raise ConfigError(f"d_out={self.d_out} not divisible by h={self.h}")
        if min(self.d_in, self.d_out, self.k, self.h, self.u) < 1:
            raise ConfigError("d_in, d_out, k, h, u must all be >= 1")
        if self.key_norm not in KEY_NORMS:
            raise ConfigError(f"key_norm must be one of {KEY_NORMS}")
        if self.impl not in IMPLS:
            raise ConfigError(f"impl must be one of {IMPLS}")
        if self.intra_softmax not in ("joint", "per_u"):
            raise ConfigError("intra_softmax must be 'joint' or 'per_u'")
        if self.impl != "einsum" and self.boundary != "clamped":
            raise ConfigError("conv implementations support clamped boundaries only")

    @property
    def v(self) -> int:
        return self.d_out // self.h


@dataclass
class LambdaParams:
    """Projection matrices, embedding table, and optional scale/shift hooks.

    w_q: [d_in, h*k]; w_k: [d_in, k*u]; w_v: [d_in, v*u];
    rel: [r, k] (u=1) or [r, k, u].  Hook vectors act per channel on the
    flat projections ([h*k] for queries, [v*u] for values) before the head
    reshape; they replace the batch-norm of the original recipe with a
    deterministic affine so forwards stay per-example pure.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    rel: np.ndarray
    q_scale: np.ndarray | None = None
    q_shift: np.ndarray | None = None
    v_scale: np.ndarray | None = None
    v_shift: np.ndarray | None = None

    def copy(self) -> "LambdaParams":
        return LambdaParams(
            *(a.copy() for a in (self.w_q, self.w_k, self.w_v, self.rel)),
            *(None if a is None else a.copy()
              for a in (self.q_scale, self.q_shift, self.v_scale, self.v_shift)),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "rel": self.rel}
        for name in ("q_scale", "q_shift", "v_scale", "v_shift"):
            a = getattr(self, name)
            if a is not None:
                out[name] = a
        return out


@lru_cache(maxsize=128)
def index_map_for(
    geometry: Geometry, boundary: str, scope: tuple[int, ...] | None
) -> RelIndexMap:
    return build_rel_index_map(geometry, None, boundary, scope)


def config_index_map(config: LambdaConfig) -> RelIndexMap:
    return index_map_for(config.geometry, config.boundary, config.scope)


def num_rel_buckets(config: LambdaConfig) -> int:
    return config_index_map(config).num_buckets


def init_params(config: LambdaConfig, seed: int = DEFAULT_SEED) -> LambdaParams:
    """Fan-in initialization.

    Query projection entries have variance 1/(k*d_in) (the dot-product scaling
    is absorbed into the projection), key/value projections variance 1/d_in,
    embeddings unit normal.  Hooks start as the identity (scale 1, shift 0).
    """
    d, k, h, u, v = config.d_in, config.k, config.h, config.u, config.v
    w_q = stream(seed, "params/wq").normal(0.0, (k * d) ** -0.5, size=(d, h * k))
    w_k = stream(seed, "params/wk").normal(0.0, d**-0.5, size=(d, k * u))
    w_v = stream(seed, "params/wv").normal(0.0, d**-0.5, size=(d, v * u))
    r_shape = (num_rel_buckets(config), k) if u == 1 else (num_rel_buckets(config), k, u)
    rel = stream(seed, "params/rel").standard_normal(r_shape)
    params = LambdaParams(w_q=w_q, w_k=w_k, w_v=w_v, rel=rel)
    if config.qv_hook:
        params.q_scale = np.ones(h * k)
        params.q_shift = np.zeros(h * k)
        params.v_scale = np.ones(v * u)
        params.v_shift = np.zeros(v * u)
    return params


def project_qkv(X, C, params: LambdaParams, config: LambdaConfig):
    """Project inputs/context to queries, keys, values.

    Returns Q [b,h,n,k], K [b,m,k] or [b,m,k,u], V [b,m,v] or [b,m,v,u].
    The hook (if enabled) rescales the flat Q and V projections; keys are
    never hooked.
    """
    X, C = np.asarray(X), np.asarray(C)
    b, n, d = X.shape
    if d != config.d_in or C.shape[2] != config.d_in:
        raise ShapeError(
            f"input channels {d}/{C.shape[2]} do not match d_in={config.d_in}"
        )
    m = C.shape[1]
    k, h, u, v = config.k, config.h, config.u, config.v
    q_flat = X @ params.w_q  # [b, n, h*k]
    v_flat = C @ params.w_v  # [b, m, v*u]
    if config.qv_hook:
        q_flat = q_flat * params.q_scale + params.q_shift
        v_flat = v_flat * params.v_scale + params.v_shift
    Q = q_flat.reshape(b, n, h, k).transpose(0, 2, 1, 3)
    K = C @ params.w_k
    if u > 1:
        K = K.reshape(b, m, k, u)
        V = v_flat.reshape(b, m, v, u)
    else:
        V = v_flat
    return Q, K, V


def normalize_keys(K, mode: str, intra_softmax: str = "joint", exact: bool = False):
    """Normalize keys along the context axis m.

    softmax acts per (b, k) slice; with intra-depth u > 1 the 'joint' choice
    normalizes over (m, u) together so the total mass per (b, k) stays 1.
    l2 divides by the Euclidean norm over m; 'none' is the identity.
    """
    K = np.asarray(K)
    if mode == "none":
        return K
    if mode == "l2":
        return l2norm(K, axis=1)
    if mode != "softmax":
        raise ConfigError(f"unknown key normalization {mode!r}")
    if K.ndim == 3 or intra_softmax == "per_u":
        return softmax(K, axis=1, exact=exact)
    b, m, k, u = K.shape
    flat = K.transpose(0, 2, 1, 3).reshape(b, k, m * u)
    out = softmax(flat, axis=2, exact=exact)
    return out.reshape(b, k, m, u).transpose(0, 2, 1, 3)


def content_lambda(K_norm, V, exact: bool = False):
    """lambda_c = sum_m kbar_m v_m^T, shared across query positions."""
    spec = "bmk,bmv->bkv" if K_norm.ndim == 3 else "bmku,bmvu->bkv"
    out = contract(spec, K_norm, V, exact=exact)
    if mutation.active("content_lambda_sign_flip"):
        out = -out
    return out


def position_lambdas_einsum(E, V, exact: bool = False):
    """lambda_p[n] = E_n^T V via the global contraction; E zeros encode scope."""
    if V.ndim == 3:
        return contract("nmk,bmv->bnkv", E, V, exact=exact)
    return contract("knmu,bmvu->bnkv", np.transpose(E, (2, 0, 1, 3)), V, exact=exact)


def apply_lambdas(Q, lam_c, lam_p, exact: bool = False):
    """y_n = (lambda_c + lambda_p[n])^T q_n^h, heads concatenated along channels."""
    b, h, n, k = Q.shape
    parts = []
    if lam_c is not None:
        parts.append(contract("bhnk,bkv->bnhv", Q, lam_c, exact=exact))
    if lam_p is not None:
        parts.append(contract("bhnk,bnkv->bnhv", Q, lam_p, exact=exact))
    if not parts:
        raise ConfigError("need at least one of content/position lambdas")
    out = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    return out.reshape(b, n, h * out.shape[3])


def lambda_layer_forward(
    X,
    C=None,
    params: LambdaParams | None = None,
    config: LambdaConfig | None = None,
    *,
    E=None,
    mode: str = "full",
    exact: bool = False,
):
    """Full forward pass: project -> normalize keys -> lambdas -> apply.

    ``C`` defaults to self-context (C = X).  ``E`` overrides the expanded
    embeddings (shape [n, m, k]); by default it is expanded from the config's
    relative-position map.  ``mode`` selects 'full', 'content' (position
    lambdas forced to zero) or 'position' (content lambda dropped); the full
    output is exactly the sum of the two single-mode outputs.
    """
    if config.u != 1:
        raise ConfigError("u > 1 goes through intra_depth_forward")
    return _forward(X, C, params, config, E=E, mode=mode, exact=exact)


def _forward(X, C, params, config, *, E=None, mode="full", exact=False):
    if mode not in ("full", "content", "position"):
        raise ConfigError(f"unknown mode {mode!r}")
    X = np.asarray(X)
    C = X if C is None else np.asarray(C)
    Q, K, V = project_qkv(X, C, params, config)
    lam_c = lam_p = None
    if mode in ("full", "content"):
        K_norm = normalize_keys(K, config.key_norm, config.intra_softmax, exact=exact)
        lam_c = content_lambda(K_norm, V, exact=exact)
    if mode in ("full", "position"):
        lam_p = _position_lambdas(E, V, params, config, C, exact=exact)
    return apply_lambdas(Q, lam_c, lam_p, exact=exact)


def _position_lambdas(E, V, params, config, C, exact):
    if config.impl == "einsum":
        if E is None:
            E = expand_embeddings(config_index_map(config), params.rel)
        if E.shape[1] != C.shape[1]:
            raise ShapeError(
                f"embeddings cover {E.shape[1]} context positions, context has "
                f"{C.shape[1]}"
            )
        return position_lambdas_einsum(E, V, exact=exact)
    from .conv import position_lambdas_conv, position_lambdas_depthwise

    if C.shape[1] != config.geometry.size:
        raise ShapeError("conv implementations require self-context geometry")
    fn = position_lambdas_conv if config.impl == "conv" else position_lambdas_depthwise
    return fn(params.rel, V, config.scope, config.geometry)


def parameter_count(config: LambdaConfig) -> int:
    """Closed-form parameter count d*(h*k + k*u + v*u) + r*k*u (hooks excluded)."""
    d, k, h, u, v = config.d_in, config.k, config.h, config.u, config.v
    return d * (h * k + k * u + v * u) + num_rel_buckets(config) * k * u
