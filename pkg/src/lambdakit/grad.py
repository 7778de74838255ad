"""Analytic backward passes and the finite-difference gradient oracle.

Every forward variant has a hand-derived reverse-mode counterpart built from
the transpose-contraction rule (for Y = contract(spec, A, B): dA is the
contraction of dY with B under the permuted spec, and symmetrically for dB),
plus the closed-form softmax/l2 Jacobians.  There is no tape: the handful of
contraction specs makes explicit derivations shorter and auditable.

``finite_diff_check`` is the independent oracle: central differences of a
scalar loss, one coordinate at a time, in reference precision.  The default
loss is a seeded random linear functional of the output, which exercises
every output coordinate (a plain output sum can hide sign errors that
cancel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv import position_lambdas_conv_backward
from .errors import ConfigError, NonFiniteError
from .layer import (
    LambdaConfig,
    config_index_map,
    normalize_keys,
    project_qkv,
)
from .relpos import OUT_OF_SCOPE, expand_embeddings
from .rng import stream
from .tensor import contract
from .variants import MaskSpec, MultiheadParams

VARIANTS = (
    "global",
    "scoped",
    "conv",
    "depthwise",
    "masked",
    "multihead",
    "intra_depth",
    "content_only",
    "position_only",
)


@dataclass
class GradBundle:
    """Gradients shaped like their primals; ``c`` is None for self-context."""

    x: np.ndarray
    c: np.ndarray | None = None
    w_q: np.ndarray | None = None
    w_k: np.ndarray | None = None
    w_v: np.ndarray | None = None
    rel: np.ndarray | None = None
    q_scale: np.ndarray | None = None
    q_shift: np.ndarray | None = None
    v_scale: np.ndarray | None = None
    v_shift: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("x", "c", "w_q", "w_k", "w_v", "rel",
                     "q_scale", "q_shift", "v_scale", "v_shift"):
            a = getattr(self, name)
            if a is not None:
                out[name] = a
        return out


def variant_forward(variant, X, C, params, config, mask: MaskSpec | None = None):
    """Uniform forward dispatch used by gradient checks and the CLI."""
    from . import variants as var
    from .layer import lambda_layer_forward

    if variant in ("global", "scoped", "conv", "depthwise"):
        return lambda_layer_forward(X, C, params, config)
    if variant == "masked":
        return var.masked_lambda_forward(X, C, params, config, mask)
    if variant == "multihead":
        return var.multihead_lambda_forward(X, C, params, config)
    if variant == "intra_depth":
        return var.intra_depth_forward(X, C, params, config)
    if variant == "content_only":
        return var.content_only_forward(X, C, params, config)
    if variant == "position_only":
        return var.position_only_forward(X, C, params, config)
    raise ConfigError(f"unknown variant {variant!r}; known: {VARIANTS}")


def backward(
    variant: str,
    X,
    C,
    params,
    config: LambdaConfig,
    upstream,
    mask: MaskSpec | None = None,
) -> GradBundle:
    """Exact reverse-mode derivative of the composed forward.

    ``upstream`` is dL/dY, shaped like the forward output.  When C is None
    (self-context) the context-path gradients are folded into ``x``.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; known: {VARIANTS}")
    X = np.asarray(X)
    self_context = C is None
    Cc = X if self_context else np.asarray(C)
    G = np.asarray(upstream)
    if variant == "multihead":
        bundle = _backward_multihead(X, Cc, params, config, G)
    elif variant == "masked":
        bundle = _backward_masked(X, Cc, params, config, G, mask)
    else:
        mode = {"content_only": "content", "position_only": "position"}.get(
            variant, "full"
        )
        bundle = _backward_main(X, Cc, params, config, G, mode)
    if self_context:
        bundle.x = bundle.x + bundle.c
        bundle.c = None
    return bundle


# --- shared pieces -----------------------------------------------------------


def _key_norm_backward(K, K_norm, dKn, config: LambdaConfig):
    mode = config.key_norm
    if mode == "none":
        return dKn
    if mode == "softmax":
        if K.ndim == 3 or config.intra_softmax == "per_u":
            axes = (1,)
        else:
            axes = (1, 3)  # joint (m, u)
        inner = np.sum(dKn * K_norm, axis=axes, keepdims=True)
        return K_norm * (dKn - inner)
    # l2 along m: Kn = K / rho with rho the per-slice norm; zero slices carry
    # zero gradient (forward is constant zero in a neighborhood of direction).
    rho = np.sqrt(np.sum(K * K, axis=1, keepdims=True))
    safe = np.where(rho > 0, rho, 1.0)
    inner = np.sum(dKn * K_norm, axis=1, keepdims=True)
    dK = (dKn - K_norm * inner) / safe
    return np.where(rho > 0, dK, 0.0)


def _projection_backward(X, C, params, config, dQ, dK, dV, bundle: GradBundle):
    """Backprop through projections and hooks into the bundle (in place)."""
    b, n, _ = X.shape
    m = C.shape[1]
    h, k, u, v = config.h, config.k, config.u, config.v
    dq_flat = np.ascontiguousarray(dQ.transpose(0, 2, 1, 3)).reshape(b, n, h * k)
    dv_flat = dV.reshape(b, m, v * u)
    dk_flat = dK.reshape(b, m, k * u)
    if config.qv_hook:
        q_pre = X @ params.w_q
        v_pre = C @ params.w_v
        bundle.q_scale = np.einsum("bnc,bnc->c", dq_flat, q_pre)
        bundle.q_shift = dq_flat.sum(axis=(0, 1))
        bundle.v_scale = np.einsum("bmc,bmc->c", dv_flat, v_pre)
        bundle.v_shift = dv_flat.sum(axis=(0, 1))
        dq_flat = dq_flat * params.q_scale
        dv_flat = dv_flat * params.v_scale
    bundle.w_q = np.einsum("bnd,bnc->dc", X, dq_flat)
    bundle.w_k = np.einsum("bmd,bmc->dc", C, dk_flat)
    bundle.w_v = np.einsum("bmd,bmc->dc", C, dv_flat)
    bundle.x = dq_flat @ params.w_q.T
    bundle.c = dk_flat @ params.w_k.T + dv_flat @ params.w_v.T


def _scatter_rel(index_map, dE):
    """Accumulate expanded-embedding gradients back into table buckets."""
    table = index_map.table
    valid = table != OUT_OF_SCOPE
    shape = (index_map.num_buckets,) + dE.shape[2:]
    dR = np.zeros(shape)
    np.add.at(dR, table[valid], dE[valid])
    return dR


# --- main path (global / scoped einsum / conv / depthwise / u >= 1) ----------


def _backward_main(X, C, params, config, G, mode):
    b, n, _ = X.shape
    m = C.shape[1]
    h, k, u, v = config.h, config.k, config.u, config.v
    with_u = u > 1
    Q, K, V = project_qkv(X, C, params, config)
    index_map = config_index_map(config)

    lam_c = lam_p = None
    K_norm = None
    E = None
    if mode in ("full", "content"):
        K_norm = normalize_keys(K, config.key_norm, config.intra_softmax)
        spec = "bmku,bmvu->bkv" if with_u else "bmk,bmv->bkv"
        lam_c = contract(spec, K_norm, V)
    if mode in ("full", "position"):
        if config.impl == "einsum":
            E = expand_embeddings(index_map, params.rel)
            spec = "nmku,bmvu->bnkv" if with_u else "nmk,bmv->bnkv"
            lam_p = contract(spec, E, V)
        else:
            from .conv import position_lambdas_conv

            lam_p = position_lambdas_conv(params.rel, V, config.scope, config.geometry)

    G4 = G.reshape(b, n, h, v)
    bundle = GradBundle(x=np.zeros_like(X))
    dQ = np.zeros((b, h, n, k))
    dV = np.zeros_like(V)
    dK = np.zeros_like(K)
    if lam_c is not None:
        dQ += contract("bnhv,bkv->bhnk", G4, lam_c)
        dlam_c = contract("bhnk,bnhv->bkv", Q, G4)
        if with_u:
            dKn = contract("bkv,bmvu->bmku", dlam_c, V)
            dV += contract("bmku,bkv->bmvu", K_norm, dlam_c)
        else:
            dKn = contract("bkv,bmv->bmk", dlam_c, V)
            dV += contract("bmk,bkv->bmv", K_norm, dlam_c)
        dK += _key_norm_backward(K, K_norm, dKn, config)
    if lam_p is not None:
        dQ += contract("bnhv,bnkv->bhnk", G4, lam_p)
        dlam_p = contract("bhnk,bnhv->bnkv", Q, G4)
        if config.impl == "einsum":
            if with_u:
                dE = contract("bnkv,bmvu->nmku", dlam_p, V)
                dV += contract("nmku,bnkv->bmvu", E, dlam_p)
            else:
                dE = contract("bnkv,bmv->nmk", dlam_p, V)
                dV += contract("nmk,bnkv->bmv", E, dlam_p)
            bundle.rel = _scatter_rel(index_map, dE)
        else:
            dR, dV_conv = position_lambdas_conv_backward(
                params.rel, V, config.scope, config.geometry, dlam_p
            )
            bundle.rel = dR
            dV += dV_conv
    if bundle.rel is None:
        bundle.rel = np.zeros_like(params.rel)
    _projection_backward(X, C, params, config, dQ, dK, dV, bundle)
    return bundle


# --- masked path -------------------------------------------------------------


def _backward_masked(X, C, params, config, G, mask: MaskSpec):
    b, n, _ = X.shape
    m = C.shape[1]
    h, k, v = config.h, config.k, config.v
    mk = mask.mask
    Q, K, V = project_qkv(X, C, params, config)
    index_map = config_index_map(config)

    S = np.exp(K)
    mu = contract("bmk,bmv->bmkv", S, V)
    numer = contract("bmkv,nm->bnkv", mu, mk)
    denom = contract("bmk,nm->bnk", S, mk)
    lam_c = numer / denom[..., None]
    E = expand_embeddings(index_map, params.rel)
    E_masked = contract("knm,nm->knm", np.transpose(E, (2, 0, 1)), mk)
    E_nmk = np.transpose(E_masked, (1, 2, 0))
    lam_p = contract("nmk,bmv->bnkv", E_nmk, V)

    G4 = G.reshape(b, n, h, v)
    dQ = contract("bnhv,bnkv->bhnk", G4, lam_c) + contract("bnhv,bnkv->bhnk", G4, lam_p)
    dlam_c = contract("bhnk,bnhv->bnkv", Q, G4)
    dlam_p = contract("bhnk,bnhv->bnkv", Q, G4)

    dnumer = dlam_c / denom[..., None]
    ddenom = -np.sum(dnumer * lam_c, axis=-1)
    dmu = contract("bnkv,nm->bmkv", dnumer, mk)
    dS = contract("bmkv,bmv->bmk", dmu, V) + contract("bnk,nm->bmk", ddenom, mk)
    dV = contract("bmkv,bmk->bmv", dmu, S)
    dK = dS * S

    dE_nmk = contract("bnkv,bmv->nmk", dlam_p, V)
    dV += contract("nmk,bnkv->bmv", E_nmk, dlam_p)
    dE = np.transpose(np.transpose(dE_nmk, (2, 0, 1)) * mk, (1, 2, 0))
    bundle = GradBundle(x=np.zeros_like(X))
    bundle.rel = _scatter_rel(index_map, dE)
    _projection_backward(X, C, params, config, dQ, dK, dV, bundle)
    return bundle


# --- multi-head path ---------------------------------------------------------


def _backward_multihead(X, C, params: MultiheadParams, config, G):
    b, n, _ = X.shape
    m = C.shape[1]
    h, k, v = config.h, config.k, config.v
    index_map = config_index_map(config)
    Q = (X @ params.w_q).reshape(b, n, h, k).transpose(0, 2, 1, 3)
    K = contract("bmd,hdk->bhmk", C, params.w_k)
    V = contract("bmd,hdv->bhmv", C, params.w_v)
    flat = K.reshape(b * h, m, k)
    K_norm = normalize_keys(flat, config.key_norm).reshape(b, h, m, k)
    E = np.stack([expand_embeddings(index_map, params.rel[hi]) for hi in range(h)])
    lam_c = contract("bhmk,bhmv->bhkv", K_norm, V)
    lam_p = contract("hnmk,bhmv->bnhkv", E, V)

    G4 = G.reshape(b, n, h, v)
    dQ = contract("bnhv,bhkv->bhnk", G4, lam_c) + contract("bnhv,bnhkv->bhnk", G4, lam_p)
    dlam_c = contract("bhnk,bnhv->bhkv", Q, G4)
    dlam_p = contract("bhnk,bnhv->bnhkv", Q, G4)

    dKn = contract("bhkv,bhmv->bhmk", dlam_c, V)
    dV = contract("bhmk,bhkv->bhmv", K_norm, dlam_c)
    dV += contract("hnmk,bnhkv->bhmv", E, dlam_p)
    dE = contract("bnhkv,bhmv->hnmk", dlam_p, V)
    if config.key_norm == "softmax":
        inner = np.sum(dKn * K_norm, axis=2, keepdims=True)
        dK = K_norm * (dKn - inner)
    elif config.key_norm == "none":
        dK = dKn
    else:
        rho = np.sqrt(np.sum(K * K, axis=2, keepdims=True))
        safe = np.where(rho > 0, rho, 1.0)
        inner = np.sum(dKn * K_norm, axis=2, keepdims=True)
        dK = np.where(rho > 0, (dKn - K_norm * inner) / safe, 0.0)

    dq_flat = np.ascontiguousarray(dQ.transpose(0, 2, 1, 3)).reshape(b, n, h * k)
    bundle = GradBundle(x=dq_flat @ params.w_q.T)
    bundle.w_q = np.einsum("bnd,bnc->dc", X, dq_flat)
    bundle.w_k = contract("bmd,bhmk->hdk", C, dK)
    bundle.w_v = contract("bmd,bhmv->hdv", C, dV)
    bundle.c = contract("bhmk,hdk->bmd", dK, params.w_k)
    bundle.c += contract("bhmv,hdv->bmd", dV, params.w_v)
    bundle.rel = np.stack(
        [_scatter_rel(index_map, dE[hi]) for hi in range(h)]
    )
    return bundle


# --- finite differences ------------------------------------------------------


@dataclass
class FdEntry:
    max_rel_err: float
    worst_index: tuple
    analytic: float
    numeric: float


@dataclass
class FdReport:
    entries: dict[str, FdEntry] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            name: {
                "max_rel_err": e.max_rel_err,
                "worst_index": list(e.worst_index),
                "analytic": e.analytic,
                "numeric": e.numeric,
            }
            for name, e in self.entries.items()
        }


def finite_diff_check(
    loss_fn,
    arrays: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    step: float = 1e-5,
) -> FdReport:
    """Central-difference check of ``analytic`` gradients of ``loss_fn``.

    ``arrays`` are perturbed in place one coordinate at a time; relative error
    uses max(|analytic|, |numeric|, 1e-8) as the denominator.
    """
    if step <= 0:
        raise ConfigError("step must be positive")
    report = FdReport()
    for name, arr in arrays.items():
        grad = analytic[name]
        worst = FdEntry(0.0, (), 0.0, 0.0)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_fn()
            arr[idx] = orig - step
            down = loss_fn()
            arr[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError(f"non-finite forward while perturbing {name}{idx}")
            numeric = (up - down) / (2 * step)
            a = float(grad[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel >= worst.max_rel_err:
                worst = FdEntry(rel, idx, a, numeric)
        report.entries[name] = worst
    return report


def random_linear_functional(shape, seed: int, name: str = "fd/loss") -> np.ndarray:
    return stream(seed, name).standard_normal(shape)


def gradient_check(
    variant: str,
    X,
    params,
    config: LambdaConfig,
    seed: int,
    mask: MaskSpec | None = None,
    step: float = 1e-5,
    check_inputs: bool = True,
) -> FdReport:
    """End-to-end check: analytic backward vs central differences.

    Loss is a seeded random linear functional of the output, so its gradient
    w.r.t. the output is the weight tensor itself.
    """
    X = np.asarray(X, dtype=float).copy()
    params = params.copy()
    y0 = variant_forward(variant, X, None, params, config, mask)
    W = random_linear_functional(y0.shape, seed)

    def loss():
        return float(
            np.sum(W * variant_forward(variant, X, None, params, config, mask))
        )

    bundle = backward(variant, X, None, params, config, W, mask)
    analytic = dict(bundle.arrays())
    analytic.pop("c", None)
    arrays = dict(params.arrays())
    targets = {n: analytic[n] for n in arrays}
    if check_inputs:
        arrays["x"] = X
        targets["x"] = analytic["x"]
    return finite_diff_check(loss, arrays, targets, step)
