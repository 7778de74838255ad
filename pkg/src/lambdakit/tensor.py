"""Dense-tensor primitives: labeled contraction, softmax, elementwise ops, serialization.

Tensors are plain numpy ndarrays in row-major (C) order.  Two precisions are
used throughout the library:

* reference precision (float64) -- used by every correctness suite and
  gradient check; deterministic on a fixed machine.
* fast precision (float32) -- used only by throughput benchmarks.

``contract`` additionally offers ``exact=True``, a slow pure-Python path whose
reductions are exactly rounded (``math.fsum``) and therefore independent of
summand order.  Properties that assert *bitwise* equality under a permutation
or rotation of the reduced axis (e.g. circular shift equivariance) are checked
in that mode; everything else runs on the fast numpy path.
"""

from __future__ import annotations

import math
import struct
from itertools import product

import numpy as np

from .errors import ShapeError, SpecError

REFERENCE_DTYPE = np.float64
FAST_DTYPE = np.float32

# Specs the rest of the library is allowed to lean on.  The generic engine
# accepts any well-formed spec; this list is the tested contract surface.
KNOWN_SPECS = (
    "bmk,bmv->bkv",
    "nmk,bmv->bnkv",
    "bhnk,bkv->bnhv",
    "bhnk,bnkv->bnhv",
    "bmkv,nm->bnkv",
    "knm,nm->knm",
    "bhmk,bhmv->bhkv",
    "hnmk,bhmv->bnhkv",
    "bmku,bmvu->bkv",
    "knmu,bmvu->bnkv",
)


def _parse_spec(spec: str, n_operands: int):
    if "->" not in spec:
        raise SpecError(f"spec {spec!r} lacks '->'")
    lhs, out = spec.split("->")
    ins = lhs.split(",")
    if len(ins) != n_operands:
        raise SpecError(f"spec {spec!r} names {len(ins)} operands, got {n_operands}")
    for labels in ins + [out]:
        if not all(c.isalpha() for c in labels):
            raise SpecError(f"spec {spec!r} contains non-letter axis labels")
    for labels in ins:
        if len(set(labels)) != len(labels):
            raise SpecError(f"repeated label within one operand in {spec!r}")
    if len(set(out)) != len(out):
        raise SpecError(f"repeated label in output of {spec!r}")
    seen = set("".join(ins))
    missing = [c for c in out if c not in seen]
    if missing:
        raise SpecError(f"output labels {missing} of {spec!r} absent from all inputs")
    return ins, out


def _label_extents(ins, out, operands):
    extents: dict[str, int] = {}
    for labels, op in zip(ins, operands):
        if op.ndim != len(labels):
            raise ShapeError(
                f"operand rank {op.ndim} does not match labels {labels!r}"
            )
        for c, e in zip(labels, op.shape):
            if c in extents and extents[c] != e:
                raise ShapeError(
                    f"label '{c}' has extents {extents[c]} and {e} across operands"
                )
            extents[c] = e
    return extents


def contract(spec: str, *operands: np.ndarray, exact: bool = False) -> np.ndarray:
    """General labeled contraction (einsum semantics).

    Output equals broadcast-multiply-then-sum over every label absent from the
    output.  Hot specs dispatch to matmul/tensordot specializations (same
    contract, agreement tested against the generic path); everything else goes
    through ``np.einsum``.  The ``exact`` path sums each output element with
    ``math.fsum`` over reduced indices enumerated in ascending row-major order
    (last label innermost), which makes the result independent of summand
    order.
    """
    operands = tuple(np.asarray(op) for op in operands)
    ins, out = _parse_spec(spec, len(operands))
    extents = _label_extents(ins, out, operands)
    if exact:
        return _contract_exact(ins, out, extents, operands)
    fast = _SPECIALIZED.get(spec)
    if fast is not None:
        return fast(*operands)
    return np.einsum(spec, *operands, optimize=True)


def contract_generic(spec: str, *operands: np.ndarray) -> np.ndarray:
    """The unspecialized engine; specialized paths must agree with it."""
    operands = tuple(np.asarray(op) for op in operands)
    ins, out = _parse_spec(spec, len(operands))
    _label_extents(ins, out, operands)
    return np.einsum(spec, *operands, optimize=True)


def _spec_bmk_bmv_bkv(a, b):
    return np.matmul(a.transpose(0, 2, 1), b)


def _spec_nmk_bmv_bnkv(e, v):
    # tensordot over m -> [n, k, b, v], then to [b, n, k, v]
    return np.tensordot(e, v, axes=((1,), (1,))).transpose(2, 0, 1, 3)


def _spec_bhnk_bkv_bnhv(q, lam):
    return np.matmul(q.transpose(0, 2, 1, 3), lam[:, None])


def _spec_bhnk_bnkv_bnhv(q, lam):
    return np.matmul(q.transpose(0, 2, 1, 3), lam)


def _spec_bmkv_nm_bnkv(mu, mask):
    return np.tensordot(mask, mu, axes=((1,), (1,))).transpose(1, 0, 2, 3)


def _spec_bmk_nm_bnk(s, mask):
    return np.tensordot(mask, s, axes=((1,), (1,))).transpose(1, 0, 2)


def _spec_knm_nm_knm(e, mask):
    return e * mask[None]


def _spec_bhmk_bhmv_bhkv(k, v):
    return np.matmul(k.transpose(0, 1, 3, 2), v)


_SPECIALIZED = {
    "bmk,bmv->bkv": _spec_bmk_bmv_bkv,
    "nmk,bmv->bnkv": _spec_nmk_bmv_bnkv,
    "bhnk,bkv->bnhv": _spec_bhnk_bkv_bnhv,
    "bhnk,bnkv->bnhv": _spec_bhnk_bnkv_bnhv,
    "bmkv,nm->bnkv": _spec_bmkv_nm_bnkv,
    "bmk,nm->bnk": _spec_bmk_nm_bnk,
    "knm,nm->knm": _spec_knm_nm_knm,
    "bhmk,bhmv->bhkv": _spec_bhmk_bhmv_bhkv,
}


def _contract_exact(ins, out, extents, operands):
    reduced = sorted(set("".join(ins)) - set(out))
    out_shape = tuple(extents[c] for c in out)
    result = np.zeros(out_shape, dtype=REFERENCE_DTYPE)
    red_ranges = [range(extents[c]) for c in reduced]
    for out_idx in product(*(range(e) for e in out_shape)):
        env = dict(zip(out, out_idx))
        terms = []
        for red_idx in product(*red_ranges):
            env.update(zip(reduced, red_idx))
            t = 1.0
            for labels, op in zip(ins, operands):
                t *= float(op[tuple(env[c] for c in labels)])
            terms.append(t)
        result[out_idx] = math.fsum(terms)
    return result


def softmax(x: np.ndarray, axis: int, exact: bool = False) -> np.ndarray:
    """Softmax along ``axis`` with max-subtraction for stability.

    Each slice sums to 1 and is invariant under per-slice constant shifts.
    """
    x = np.asarray(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of bounds for rank {x.ndim}")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    if exact:
        z = np.apply_along_axis(lambda s: math.fsum(s.tolist()), axis, e)
        return e / np.expand_dims(z, axis % x.ndim)
    return e / np.sum(e, axis=axis, keepdims=True)


def l2norm(x: np.ndarray, axis: int) -> np.ndarray:
    """Divide each slice along ``axis`` by its Euclidean norm; zero slices stay zero."""
    x = np.asarray(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of bounds for rank {x.ndim}")
    norms = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    out = np.zeros_like(x)
    np.divide(x, norms, out=out, where=norms > 0)
    return out


def add(a, b):
    return _broadcast_op(np.add, a, b)


def mul(a, b):
    return _broadcast_op(np.multiply, a, b)


def scale(a, c: float):
    return np.asarray(a) * c


def _broadcast_op(fn, a, b):
    a, b = np.asarray(a), np.asarray(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    return fn(a, b)


def elementwise(kind: str, *args, axis: int | None = None) -> np.ndarray:
    """Dispatch form of the elementwise ops: add, mul, scale, l2norm-axis."""
    if kind == "add":
        return add(*args)
    if kind == "mul":
        return mul(*args)
    if kind == "scale":
        return scale(*args)
    if kind == "l2norm-axis":
        (x,) = args
        if axis is None:
            raise SpecError("l2norm-axis requires an axis")
        return l2norm(x, axis)
    raise SpecError(f"unknown elementwise kind {kind!r}")


# --- serialization -----------------------------------------------------------
#
# Binary tensor format (little endian):
#   magic "LTNS", u8 version=1, u8 dtype (0=f64, 1=f32), u8 rank,
#   u64 extents[rank], raw row-major payload.

_MAGIC = b"LTNS"
_VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.float64:
        code = 0
    elif arr.dtype == np.float32:
        code = 1
    else:
        raise ShapeError(f"unsupported dtype {arr.dtype} (use float64 or float32)")
    header = _MAGIC + struct.pack("<BBB", _VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr).astype(_DTYPE_CODES[code]).tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if data[:4] != _MAGIC:
        raise ShapeError("bad magic; not a tensor blob")
    version, code, rank = struct.unpack("<BBB", data[4:7])
    if version != _VERSION:
        raise ShapeError(f"unsupported tensor format version {version}")
    if code not in _DTYPE_CODES:
        raise ShapeError(f"unknown dtype code {code}")
    off = 7 + 8 * rank
    shape = struct.unpack(f"<{rank}Q", data[7:off])
    dtype = _DTYPE_CODES[code]
    n = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = data[off:]
    if len(payload) != n * dtype.itemsize:
        raise ShapeError(
            f"payload holds {len(payload)} bytes, expected {n * dtype.itemsize}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.base)


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())
