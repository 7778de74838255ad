"""Translation-equivariant relative position indexing.

A compact embedding table ``R`` of shape [num_buckets, k] is shared by all
(query, context) pairs with the same relative displacement.  ``RelIndexMap``
stores the integer table mapping flat position pairs (n, m) to bucket indices,
with ``OUT_OF_SCOPE`` marking pairs outside a local window; expansion zeroes
those entries, which matches the zero-padding semantics of the convolutional
position-lambda kernels.

Geometries: 1-d sequences and 2-d grids, positions flattened row-major.
Boundary modes:

* ``clamped`` -- buckets are raw offsets; a seq(n) table has 2n-1 buckets
  (offsets -(n-1)..n-1), a grid (2H-1)(2W-1).  Equivariance holds for every
  translation that keeps both positions in range.
* ``circular`` -- offsets wrap, n (or H*W) buckets, equivariance holds for all
  translations.  Not a standard modeling choice; it exists so translation
  equivariance can be asserted exactly on full outputs.

With a local scope of odd extent s per axis the bucket count is the product of
the scope extents.  For clamped geometries a scope may extend up to 2*extent-1
per axis (a window wider than the input covers the full offset table, which is
how the conv kernels express an unrestricted context).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import tensor_from_bytes, tensor_to_bytes

OUT_OF_SCOPE = -1


@dataclass(frozen=True)
class Geometry:
    """Spatial layout of positions: ('seq', (n,)) or ('grid', (H, W))."""

    kind: str
    extents: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("seq", "grid"):
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        want = 1 if self.kind == "seq" else 2
        if len(self.extents) != want:
            raise ConfigError(f"{self.kind} geometry needs {want} extent(s)")
        if any(e < 1 for e in self.extents):
            raise ConfigError("geometry extents must be >= 1")

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    @staticmethod
    def parse(text: str) -> "Geometry":
        """Parse 'seq:N' or 'grid:HxW'."""
        try:
            kind, dims = text.split(":")
            extents = tuple(int(d) for d in dims.split("x"))
        except ValueError:
            raise ConfigError(f"cannot parse geometry {text!r}") from None
        return Geometry(kind, extents)

    def __str__(self):
        return f"{self.kind}:{'x'.join(str(e) for e in self.extents)}"


def seq(n: int) -> Geometry:
    return Geometry("seq", (n,))


def grid(h: int, w: int) -> Geometry:
    return Geometry("grid", (h, w))


def parse_scope(text: str) -> tuple[int, ...]:
    """Parse 'S' or 'SxS' into per-axis scope extents."""
    return tuple(int(s) for s in text.split("x"))


@dataclass(frozen=True)
class RelIndexMap:
    geometry: Geometry
    context_geometry: Geometry
    boundary: str
    scope: tuple[int, ...] | None
    table: np.ndarray  # [n_total, m_total] int64; OUT_OF_SCOPE for masked pairs
    num_buckets: int
    has_out_of_scope: bool = False

    @property
    def in_scope(self) -> np.ndarray:
        return self.table != OUT_OF_SCOPE


def _axis_offsets(extent: int, boundary: str) -> tuple[np.ndarray, int]:
    """Per-axis (offset_index_matrix, bucket_count) for the unscoped table."""
    pos = np.arange(extent)
    delta = pos[None, :] - pos[:, None]  # context minus query
    if boundary == "clamped":
        return delta + extent - 1, 2 * extent - 1
    return np.mod(delta, extent), extent


def _axis_scoped(extent: int, boundary: str, s: int):
    """Per-axis (bucket_or_-1 matrix, bucket_count) under a local scope ``s``."""
    half = (s - 1) // 2
    pos = np.arange(extent)
    delta = pos[None, :] - pos[:, None]
    if boundary == "circular":
        delta = np.mod(delta, extent)
        delta = np.where(delta > extent // 2, delta - extent, delta)
    ok = np.abs(delta) <= half
    return np.where(ok, delta + half, OUT_OF_SCOPE), s


def build_rel_index_map(
    geometry: Geometry,
    context_geometry: Geometry | None = None,
    boundary: str = "clamped",
    scope: tuple[int, ...] | None = None,
) -> RelIndexMap:
    """Build the (n, m) -> bucket table for ``geometry``.

    The table satisfies the translation property: whenever a translation t
    keeps both positions in range (all t in circular mode),
    table[n][m] == table[t(n)][t(m)].
    """
    if context_geometry is None:
        context_geometry = geometry
    if context_geometry != geometry:
        raise ConfigError("context geometry must equal input geometry")
    if boundary not in ("clamped", "circular"):
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    extents = geometry.extents
    if scope is not None:
        if len(scope) != len(extents):
            raise ConfigError("scope must give one extent per spatial axis")
        for s, e in zip(scope, extents):
            if s < 1 or s % 2 == 0:
                raise ConfigError(f"scope extent {s} must be odd and positive")
            limit = e if boundary == "circular" else 2 * e - 1
            if s > limit:
                raise ConfigError(
                    f"scope {s} exceeds limit {limit} for extent {e} ({boundary})"
                )

    axes = []
    for i, e in enumerate(extents):
        if scope is None:
            axes.append(_axis_offsets(e, boundary))
        else:
            axes.append(_axis_scoped(e, boundary, scope[i]))

    if len(extents) == 1:
        table, count = axes[0]
        table = table.copy()
    else:
        (t0, c0), (t1, c1) = axes
        # Row-major over (row-bucket, col-bucket); combine via flat outer sum.
        rows = np.repeat(np.arange(extents[0]), extents[1])
        cols = np.tile(np.arange(extents[1]), extents[0])
        b0 = t0[np.ix_(rows, rows)]
        b1 = t1[np.ix_(cols, cols)]
        table = b0 * c1 + b1
        table[(b0 == OUT_OF_SCOPE) | (b1 == OUT_OF_SCOPE)] = OUT_OF_SCOPE
        count = c0 * c1
    table = table.astype(np.int64)
    return RelIndexMap(
        geometry=geometry,
        context_geometry=context_geometry,
        boundary=boundary,
        scope=scope,
        table=table,
        num_buckets=int(count),
        has_out_of_scope=bool((table == OUT_OF_SCOPE).any()),
    )


def expand_embeddings(index_map: RelIndexMap, table: np.ndarray) -> np.ndarray:
    """Expand compact embeddings [r, k] (or [r, k, u]) into E [n, m, k(, u)].

    Out-of-scope pairs expand to zero vectors, matching the implicit zero
    padding of the convolutional kernels.
    """
    table = np.asarray(table)
    if table.shape[0] < index_map.num_buckets:
        raise ShapeError(
            f"embedding table has {table.shape[0]} rows, map needs "
            f"{index_map.num_buckets}"
        )
    idx = index_map.table
    if not index_map.has_out_of_scope:
        return table[idx]
    gathered = table[np.clip(idx, 0, None)]
    gathered[idx == OUT_OF_SCOPE] = 0  # fancy indexing copied; in-place is safe
    return gathered


def init_embedding_table(
    num_buckets: int, k: int, u: int = 1, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Unit-normal embedding table, [r, k] when u == 1 else [r, k, u]."""
    rng = rng or np.random.default_rng(0)
    shape = (num_buckets, k) if u == 1 else (num_buckets, k, u)
    return rng.standard_normal(shape)


def build_causal_mask(n: int) -> np.ndarray:
    """mask[n][m] = 1 iff m <= n: each query sees itself and the past."""
    if n < 1:
        raise ConfigError("causal mask needs n >= 1")
    return np.tril(np.ones((n, n)))


def map_to_tensor_bytes(index_map: RelIndexMap) -> bytes:
    """Serialize the integer table through the tensor format (f64 payload)."""
    return tensor_to_bytes(index_map.table.astype(np.float64))


def table_from_tensor_bytes(data: bytes) -> np.ndarray:
    return tensor_from_bytes(data).astype(np.int64)
