"""Lambda layer variants: masked, multi-head, intra-depth, content-only.

The masked path never materializes a per-example [b, h, n, m] map: the
context is summarized into per-query lambdas through mask contractions whose
transient buffers stay within O(b*n*k*v + k*n*m).  Masked positions enter
sums only as exact-zero products, so the output at n is bit-identical under
any perturbation of out-of-context entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layer import (
    LambdaConfig,
    LambdaParams,
    _forward,
    config_index_map,
    normalize_keys,
    num_rel_buckets,
    project_qkv,
)
from .relpos import expand_embeddings
from .rng import DEFAULT_SEED, stream
from .tensor import contract


@dataclass(frozen=True)
class MaskSpec:
    """Binary [n, m] context mask shared across the batch; rows must be nonempty."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ConfigError("mask must be a 2-d [n, m] array")
        if not np.isin(m, (0, 1)).all():
            raise ConfigError("mask entries must be 0 or 1")
        if (m.sum(axis=1) < 1).any():
            raise ConfigError("every mask row needs at least one unmasked position")
        object.__setattr__(self, "mask", m.astype(np.float64))


def masked_lambda_forward(
    X,
    C=None,
    params: LambdaParams | None = None,
    config: LambdaConfig | None = None,
    mask: MaskSpec | None = None,
    *,
    alloc_log: list | None = None,
):
    """Forward with per-query context restriction.

    Keys are renormalized per query over the unmasked positions, which makes
    the content lambda per-query as well; each query's position lambda sums
    embedding-weighted values over its unmasked positions only.  The masked
    sums gather in-context terms (equivalent to zeroing masked terms before
    summing, but robust to arbitrary garbage in masked positions: a zeroed
    sum would turn an overflowed masked term into 0*inf = NaN).  Output at n
    is therefore bit-identical under any change to out-of-context entries.
    No stabilizing shift is applied to the key exponentials (a per-query
    shift would cost a [b, n, m, k] buffer), so in-context key magnitudes
    should stay within exp range.
    """
    X = np.asarray(X)
    C = X if C is None else np.asarray(C)
    if config.u != 1:
        raise ConfigError("masked path supports u == 1")
    mk = mask.mask
    n, m = X.shape[1], C.shape[1]
    if mk.shape != (n, m):
        raise ShapeError(f"mask shape {mk.shape} != (n, m) = {(n, m)}")

    def note(name, arr):
        if alloc_log is not None:
            alloc_log.append((name, arr.shape, arr.size))
        return arr

    Q, K, V = project_qkv(X, C, params, config)
    if config.key_norm != "softmax":
        raise ConfigError("masked path defines per-query renormalization for softmax keys")
    b, k, v = X.shape[0], config.k, config.v
    # out-of-range values in masked positions may overflow exp or divide to
    # non-finite results *for the queries that see them*; that is visible in
    # the output, so the fp warnings are suppressed here
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        S = note("key_exp", np.exp(K))  # [b, m, k]
        E = note("expanded_embeddings", expand_embeddings(config_index_map(config), params.rel))
        numer = note("content_numer", np.zeros((b, n, k, v)))
        denom = note("content_denom", np.zeros((b, n, k)))
        lam_p = note("position_lambdas", np.zeros((b, n, k, v)))
        for mi in range(m):
            rows = np.flatnonzero(mk[:, mi])
            if rows.size == 0:
                continue
            v_mi = V[:, mi, None, None, :]  # [b, 1, 1, v]
            numer[:, rows] += S[:, mi, None, :, None] * v_mi
            denom[:, rows] += S[:, mi, None, :]
            lam_p[:, rows] += E[rows, mi][None, :, :, None] * v_mi
        lam_c = note("content_lambdas", numer / denom[..., None])
    Yc = contract("bhnk,bnkv->bnhv", Q, lam_c)
    Yp = contract("bhnk,bnkv->bnhv", Q, lam_p)
    return (Yc + Yp).reshape(b, n, config.h * config.v)


@dataclass
class MultiheadParams:
    """Per-head projections: w_q [d, h*k], w_k [h, d, k], w_v [h, d, v], rel [h, r, k]."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    rel: np.ndarray

    def copy(self) -> "MultiheadParams":
        return MultiheadParams(*(a.copy() for a in (self.w_q, self.w_k, self.w_v, self.rel)))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "rel": self.rel}


def init_multihead_params(config: LambdaConfig, seed: int = DEFAULT_SEED) -> MultiheadParams:
    d, k, h, v = config.d_in, config.k, config.h, config.v
    r = num_rel_buckets(config)
    return MultiheadParams(
        w_q=stream(seed, "params/wq").normal(0.0, (k * d) ** -0.5, size=(d, h * k)),
        w_k=stream(seed, "params/mh_wk").normal(0.0, d**-0.5, size=(h, d, k)),
        w_v=stream(seed, "params/mh_wv").normal(0.0, d**-0.5, size=(h, d, v)),
        rel=stream(seed, "params/mh_rel").standard_normal((h, r, k)),
    )


def tied_multihead_params(params: LambdaParams, h: int) -> MultiheadParams:
    """Give every head the multi-query layer's K/V/embedding parameters."""
    return MultiheadParams(
        w_q=params.w_q.copy(),
        w_k=np.broadcast_to(params.w_k, (h,) + params.w_k.shape).copy(),
        w_v=np.broadcast_to(params.w_v, (h,) + params.w_v.shape).copy(),
        rel=np.broadcast_to(params.rel, (h,) + params.rel.shape).copy(),
    )


def multihead_lambda_forward(
    X, C=None, params: MultiheadParams | None = None, config: LambdaConfig | None = None
):
    """Per-head lambdas applied to per-head queries, concatenated along channels."""
    X = np.asarray(X)
    C = X if C is None else np.asarray(C)
    if config.u != 1:
        raise ConfigError("multi-head path supports u == 1")
    b, n, d = X.shape
    if d != config.d_in:
        raise ShapeError(f"input channels {d} do not match d_in={config.d_in}")
    h, k, v = config.h, config.k, config.v
    Q = (X @ params.w_q).reshape(b, n, h, k).transpose(0, 2, 1, 3)
    K = contract("bmd,hdk->bhmk", C, params.w_k)
    V = contract("bmd,hdv->bhmv", C, params.w_v)
    K_norm = _per_head_normalize(K, config.key_norm)
    E = np.stack(
        [expand_embeddings(config_index_map(config), params.rel[hi]) for hi in range(h)]
    )  # [h, n, m, k]
    lam_c = contract("bhmk,bhmv->bhkv", K_norm, V)
    lam_p = contract("hnmk,bhmv->bnhkv", E, V)
    Yc = contract("bhnk,bhkv->bnhv", Q, lam_c)
    Yp = contract("bhnk,bnhkv->bnhv", Q, lam_p)
    return (Yc + Yp).reshape(b, n, h * v)


def _per_head_normalize(K, mode):
    # K [b,h,m,k]: normalize along m independently per (b,h,k)
    b, h, m, k = K.shape
    flat = K.reshape(b * h, m, k)
    out = normalize_keys(flat, mode)
    return out.reshape(b, h, m, k)


def intra_depth_forward(
    X,
    C=None,
    params: LambdaParams | None = None,
    config: LambdaConfig | None = None,
    *,
    mode: str = "full",
    exact: bool = False,
):
    """Forward with intra-depth u >= 1: lambdas reduce over (m, u).

    With u == 1 this is bit-identical to ``lambda_layer_forward`` (same code
    path on squeezed arrays).
    """
    if config.u < 1:
        raise ConfigError("u must be >= 1")
    return _forward(X, C, params, config, mode=mode, exact=exact)


def content_only_forward(
    X,
    C=None,
    params: LambdaParams | None = None,
    config: LambdaConfig | None = None,
    *,
    exact: bool = False,
):
    """Position lambdas forced to zero: the linear-attention special case.

    Equals the kernel-factorized form (phi(K)^T V)^T q_n with phi the softmax
    over context positions (per the configured key normalization).
    """
    return _forward(X, C, params, config, mode="content", exact=exact)


def position_only_forward(
    X,
    C=None,
    params: LambdaParams | None = None,
    config: LambdaConfig | None = None,
    *,
    exact: bool = False,
):
    """Content lambda dropped; output carries only relative-position structure."""
    return _forward(X, C, params, config, mode="position", exact=exact)
