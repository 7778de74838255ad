"""Naive loop references with instrumented multiply counters.

Everything here is deliberately slow and dependency-free: plain Python loops
over indices in ascending order (last axis innermost), scalar arithmetic, and
explicit counting of scalar multiplications.  These are the independent route
that the vectorized kernels are checked against, and the instrument that the
closed-form cost model must match exactly.

Counting convention: one count per scalar multiply inside the lambda
generation and application stages (projections excluded); additions,
exponentials and the per-query normalizing divisions of the masked path are
not counted.  The counted kernels mirror the production structure -- content
and position outputs are applied as two separate contractions -- so "apply"
counts 2*b*h*n*k*v for the two-term layer.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

from .tensor import _parse_spec


def oracle_contract(spec: str, *operands) -> np.ndarray:
    """Triple-nested-loop contraction; ascending indices, last axis innermost."""
    operands = [np.asarray(op) for op in operands]
    ins, out = _parse_spec(spec, len(operands))
    extents: dict[str, int] = {}
    for labels, op in zip(ins, operands):
        for c, e in zip(labels, op.shape):
            extents[c] = e
    reduced = sorted(set("".join(ins)) - set(out))
    result = np.zeros(tuple(extents[c] for c in out))
    for out_idx in product(*(range(extents[c]) for c in out)):
        env = dict(zip(out, out_idx))
        acc = 0.0
        for red_idx in product(*(range(extents[c]) for c in reduced)):
            env.update(zip(reduced, red_idx))
            term = 1.0
            for labels, op in zip(ins, operands):
                term *= float(op[tuple(env[c] for c in labels)])
            acc += term
        result[out_idx] = acc
    return result


def oracle_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    """Loop softmax with max subtraction."""
    x = np.asarray(x, dtype=float)
    moved = np.moveaxis(x, axis, -1)
    out = np.zeros_like(moved)
    for idx in product(*(range(e) for e in moved.shape[:-1])):
        row = moved[idx]
        hi = max(float(r) for r in row)
        exps = [math.exp(float(r) - hi) for r in row]
        z = sum(exps)
        out[idx] = [e / z for e in exps]
    return np.moveaxis(out, -1, axis)


def oracle_lambda_forward(X, C, w_q, w_k, w_v, E, h, key_norm="softmax"):
    """Per-query reference of the whole layer.

    Builds each lambda_n = sum_m (kbar_m + e_nm) v_m^T explicitly and applies
    it as y_n = lambda_n^T q_n per head.  All arithmetic is scalar loops.
    """
    X, C, E = np.asarray(X), np.asarray(C), np.asarray(E)
    b, n, d = X.shape
    m = C.shape[1]
    k = w_k.shape[1]
    v = w_v.shape[1]
    Qf = _loop_matmul(X, w_q)  # [b, n, h*k]
    K = _loop_matmul(C, w_k)  # [b, m, k]
    V = _loop_matmul(C, w_v)  # [b, m, v]
    Kn = _normalize_keys_loops(K, key_norm)
    Y = np.zeros((b, n, h * v))
    for bi in range(b):
        lam_c = np.zeros((k, v))
        for mi in range(m):
            for ki in range(k):
                for vi in range(v):
                    lam_c[ki, vi] += Kn[bi, mi, ki] * V[bi, mi, vi]
        for ni in range(n):
            lam = lam_c.copy()
            for mi in range(m):
                for ki in range(k):
                    for vi in range(v):
                        lam[ki, vi] += E[ni, mi, ki] * V[bi, mi, vi]
            for hi in range(h):
                for vi in range(v):
                    acc = 0.0
                    for ki in range(k):
                        acc += lam[ki, vi] * Qf[bi, ni, hi * k + ki]
                    Y[bi, ni, hi * v + vi] = acc
    return Y


def _loop_matmul(A, W):
    A, W = np.asarray(A), np.asarray(W)
    b, n, d = A.shape
    out = np.zeros((b, n, W.shape[1]))
    for bi in range(b):
        for ni in range(n):
            for ci in range(W.shape[1]):
                acc = 0.0
                for di in range(d):
                    acc += A[bi, ni, di] * W[di, ci]
                out[bi, ni, ci] = acc
    return out


def _normalize_keys_loops(K, mode):
    b, m, k = K.shape
    if mode == "none":
        return K.copy()
    out = np.zeros_like(K)
    for bi in range(b):
        for ki in range(k):
            col = [float(K[bi, mi, ki]) for mi in range(m)]
            if mode == "softmax":
                hi = max(col)
                exps = [math.exp(c - hi) for c in col]
                z = sum(exps)
                vals = [e / z for e in exps]
            else:  # l2
                norm = math.sqrt(sum(c * c for c in col))
                vals = [0.0] * m if norm == 0 else [c / norm for c in col]
            for mi in range(m):
                out[bi, mi, ki] = vals[mi]
    return out


class MultiplyCounter:
    """Per-stage tally of scalar multiplies."""

    def __init__(self):
        self.stages: dict[str, int] = {}

    def add(self, stage: str, count: int = 1):
        self.stages[stage] = self.stages.get(stage, 0) + count

    @property
    def total(self) -> int:
        return sum(self.stages.values())

    def generate_total(self) -> int:
        return sum(c for s, c in self.stages.items() if s.startswith("generate"))


def counted_lambda_kernel(Q, K_norm, E, V):
    """Multi-query kernel from projected tensors, with counts.

    Q [b,h,n,k], K_norm [b,m,k], E [n,m,k], V [b,m,v] -> (Y [b,n,h*v], counter)
    """
    Q, K_norm, E, V = map(np.asarray, (Q, K_norm, E, V))
    b, h, n, k = Q.shape
    m, v = V.shape[1], V.shape[2]
    c = MultiplyCounter()
    lam_c = np.zeros((b, k, v))
    for bi, mi, ki, vi in product(range(b), range(m), range(k), range(v)):
        lam_c[bi, ki, vi] += K_norm[bi, mi, ki] * V[bi, mi, vi]
        c.add("generate_content")
    lam_p = np.zeros((b, n, k, v))
    for bi, ni, mi, ki, vi in product(range(b), range(n), range(m), range(k), range(v)):
        lam_p[bi, ni, ki, vi] += E[ni, mi, ki] * V[bi, mi, vi]
        c.add("generate_position")
    Y = _counted_apply(Q, lam_c, lam_p, c)
    return Y, c


def _counted_apply(Q, lam_c, lam_p, c):
    """Content and position outputs applied as two separate contractions."""
    b, h, n, k = Q.shape
    v = (lam_c if lam_c is not None else lam_p).shape[-1]
    Y = np.zeros((b, n, h * v))
    for bi, hi, ni, ki, vi in product(range(b), range(h), range(n), range(k), range(v)):
        if lam_c is not None:
            Y[bi, ni, hi * v + vi] += Q[bi, hi, ni, ki] * lam_c[_c_idx(lam_c, bi, ni) + (ki, vi)]
            c.add("apply")
        if lam_p is not None:
            Y[bi, ni, hi * v + vi] += Q[bi, hi, ni, ki] * lam_p[bi, ni, ki, vi]
            c.add("apply")
    return Y


def _c_idx(lam_c, bi, ni):
    # content lambdas are [b,k,v] in the global kernel, [b,n,k,v] when masked
    return (bi,) if lam_c.ndim == 3 else (bi, ni)


def counted_conv_kernel(Q, K_norm, R, V, scope, geometry):
    """Local-scope kernel: position lambdas by explicit tap loops.

    Counts every tap multiply (padding positions included), so the position
    stage counts exactly b*n*r*k*v with r the product of scope extents.
    """
    from .conv import _check_scope, _taps

    Q, K_norm, R, V = map(np.asarray, (Q, K_norm, R, V))
    b, h, n, k = Q.shape
    v = V.shape[2]
    scope = _check_scope(scope, geometry)
    taps = _taps(scope)
    extents = geometry.extents
    c = MultiplyCounter()
    lam_c = np.zeros((b, k, v))
    for bi, mi, ki, vi in product(range(b), range(V.shape[1]), range(k), range(v)):
        lam_c[bi, ki, vi] += K_norm[bi, mi, ki] * V[bi, mi, vi]
        c.add("generate_content")
    lam_p = np.zeros((b, n, k, v))
    coords = list(product(*(range(e) for e in extents)))
    for bi, ni, (j, tap), ki, vi in product(
        range(b), range(n), enumerate(taps), range(k), range(v)
    ):
        src = tuple(p + d for p, d in zip(coords[ni], tap))
        if all(0 <= s < e for s, e in zip(src, extents)):
            flat = src[0] if len(src) == 1 else src[0] * extents[1] + src[1]
            val = V[bi, flat, vi]
        else:
            val = 0.0  # implicit zero padding
        lam_p[bi, ni, ki, vi] += R[j, ki] * val
        c.add("generate_position")
    Y = _counted_apply(Q, lam_c, lam_p, c)
    return Y, c


def counted_multihead_kernel(Q, K_norm, E, V):
    """Per-head kernel: Q [b,h,n,k], K_norm [b,h,m,k], E [h,n,m,k], V [b,h,m,v]."""
    Q, K_norm, E, V = map(np.asarray, (Q, K_norm, E, V))
    b, h, n, k = Q.shape
    m, v = V.shape[2], V.shape[3]
    c = MultiplyCounter()
    lam_c = np.zeros((b, h, k, v))
    for bi, hi, mi, ki, vi in product(range(b), range(h), range(m), range(k), range(v)):
        lam_c[bi, hi, ki, vi] += K_norm[bi, hi, mi, ki] * V[bi, hi, mi, vi]
        c.add("generate_content")
    lam_p = np.zeros((b, n, h, k, v))
    for bi, hi, ni, mi, ki, vi in product(
        range(b), range(h), range(n), range(m), range(k), range(v)
    ):
        lam_p[bi, ni, hi, ki, vi] += E[hi, ni, mi, ki] * V[bi, hi, mi, vi]
        c.add("generate_position")
    Y = np.zeros((b, n, h * v))
    for bi, hi, ni, ki, vi in product(range(b), range(h), range(n), range(k), range(v)):
        Y[bi, ni, hi * v + vi] += Q[bi, hi, ni, ki] * lam_c[bi, hi, ki, vi]
        c.add("apply")
        Y[bi, ni, hi * v + vi] += Q[bi, hi, ni, ki] * lam_p[bi, ni, hi, ki, vi]
        c.add("apply")
    return Y, c


def counted_intra_depth_kernel(Q, K_norm, E, V):
    """Intra-depth kernel: K_norm [b,m,k,u], E [n,m,k,u], V [b,m,v,u]."""
    Q, K_norm, E, V = map(np.asarray, (Q, K_norm, E, V))
    b, h, n, k = Q.shape
    m, v, u = V.shape[1], V.shape[2], V.shape[3]
    c = MultiplyCounter()
    lam_c = np.zeros((b, k, v))
    for bi, mi, ki, vi, ui in product(range(b), range(m), range(k), range(v), range(u)):
        lam_c[bi, ki, vi] += K_norm[bi, mi, ki, ui] * V[bi, mi, vi, ui]
        c.add("generate_content")
    lam_p = np.zeros((b, n, k, v))
    for bi, ni, mi, ki, vi, ui in product(
        range(b), range(n), range(m), range(k), range(v), range(u)
    ):
        lam_p[bi, ni, ki, vi] += E[ni, mi, ki, ui] * V[bi, mi, vi, ui]
        c.add("generate_position")
    Y = _counted_apply(Q, lam_c, lam_p, c)
    return Y, c


def counted_masked_kernel(Q, K_raw, E, V, mask):
    """Masked kernel: per-query content lambdas over unmasked context.

    Keys are renormalized per query over its unmasked positions; masked sums
    gather in-context terms only, so the position stage counts b*z*k*v where
    z is the number of unmasked (n, m) pairs.  Normalizing divisions are not
    counted.
    """
    Q, K_raw, E, V, mask = map(np.asarray, (Q, K_raw, E, V, mask))
    b, h, n, k = Q.shape
    m, v = V.shape[1], V.shape[2]
    c = MultiplyCounter()
    S = np.exp(K_raw)  # not counted: exponentials
    mu = np.zeros((b, m, k, v))
    for bi, mi, ki, vi in product(range(b), range(m), range(k), range(v)):
        mu[bi, mi, ki, vi] = S[bi, mi, ki] * V[bi, mi, vi]
        c.add("generate_content")
    lam_c = np.zeros((b, n, k, v))
    for bi, ni, ki, vi in product(range(b), range(n), range(k), range(v)):
        num = sum(mu[bi, mi, ki, vi] for mi in range(m) if mask[ni, mi])
        den = sum(S[bi, mi, ki] for mi in range(m) if mask[ni, mi])
        lam_c[bi, ni, ki, vi] = num / den
    lam_p = np.zeros((b, n, k, v))
    for bi, ni, mi, ki, vi in product(range(b), range(n), range(m), range(k), range(v)):
        if mask[ni, mi]:
            lam_p[bi, ni, ki, vi] += E[ni, mi, ki] * V[bi, mi, vi]
            c.add("generate_position")
    Y = _counted_apply(Q, lam_c, lam_p, c)
    return Y, c


def counted_content_only_kernel(Q, K_norm, V):
    """Content-only kernel (the linear-attention view): one apply contraction."""
    Q, K_norm, V = map(np.asarray, (Q, K_norm, V))
    b, h, n, k = Q.shape
    m, v = V.shape[1], V.shape[2]
    c = MultiplyCounter()
    lam_c = np.zeros((b, k, v))
    for bi, mi, ki, vi in product(range(b), range(m), range(k), range(v)):
        lam_c[bi, ki, vi] += K_norm[bi, mi, ki] * V[bi, mi, vi]
        c.add("generate_content")
    Y = _counted_apply(Q, lam_c, None, c)
    return Y, c
