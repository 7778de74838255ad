"""Local position lambdas computed as convolutions over the values.

Both kernels realize the same contract as the einsum path with a
scope-masked embedding expansion:

    lambda_p[b, n, k, v] = sum_delta R[bucket(delta), k] * V[b, n+delta, v]

with out-of-range context positions contributing zero (implicit SAME-style
zero padding).  Two implementations:

* ``position_lambdas_conv`` -- a regular (n+1)-d convolution that treats the
  value depth as an extra spatial dimension: one [taps, 1, ..., k] kernel
  slides over (positions..., v).
* ``position_lambdas_depthwise`` -- an n-d depthwise convolution with channel
  multiplier k: the compact embeddings are tiled across the v input channels
  into a [taps, v, k] kernel, each value channel convolved with its own copy,
  giving [.., v, k] output that is transposed to [.., k, v].

Both accumulate taps in ascending bucket order with one fused
multiply-accumulate per tap, so their outputs are bit-identical; they differ
only in how the kernel is laid out and broadcast.  Scope extents are odd; a
clamped axis accepts scopes up to 2*extent-1, where the window covers the
full relative-offset table and the result equals the unscoped einsum path.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError
from .relpos import Geometry


def _check_scope(scope, geometry: Geometry) -> tuple[int, ...]:
    if scope is None:
        scope = tuple(2 * e - 1 for e in geometry.extents)
    if len(scope) != len(geometry.extents):
        raise ConfigError("scope must give one extent per spatial axis")
    for s, e in zip(scope, geometry.extents):
        if s < 1 or s % 2 == 0:
            raise ConfigError(f"scope extent {s} must be odd and positive")
        if s > 2 * e - 1:
            raise ConfigError(f"scope {s} exceeds 2*{e}-1 for extent {e}")
    return scope


def _taps(scope: tuple[int, ...]):
    """Offsets in ascending row-major bucket order."""
    halves = [(s - 1) // 2 for s in scope]
    if len(scope) == 1:
        return [(d,) for d in range(-halves[0], halves[0] + 1)]
    return [
        (dr, dc)
        for dr in range(-halves[0], halves[0] + 1)
        for dc in range(-halves[1], halves[1] + 1)
    ]


def _spatial(V, geometry: Geometry):
    """Reshape V [b, n_total, v(, u)] into spatial layout [b, *extents, v(, u)]."""
    V = np.asarray(V)
    b, n_total = V.shape[0], V.shape[1]
    if n_total != geometry.size:
        raise ShapeError(f"V covers {n_total} positions, geometry has {geometry.size}")
    return V.reshape((b,) + geometry.extents + V.shape[2:])


def _pad_and_slices(Vs, geometry, scope):
    halves = [(s - 1) // 2 for s in scope]
    pad = [(0, 0)] + [(h, h) for h in halves] + [(0, 0)] * (Vs.ndim - 1 - len(halves))
    Vp = np.pad(Vs, pad)
    extents = geometry.extents

    def window(tap):
        idx = [slice(None)]
        for ax, d in enumerate(tap):
            start = d + halves[ax]
            idx.append(slice(start, start + extents[ax]))
        return Vp[tuple(idx)]

    return window


def _accumulate(R, V, scope, geometry, tap_term):
    """Shared tap loop; ``tap_term`` produces one [b, ..., k, v] contribution."""
    scope = _check_scope(scope, geometry)
    R = np.asarray(R)
    with_u = R.ndim == 3
    taps = _taps(scope)
    if R.shape[0] != len(taps):
        raise ShapeError(f"R has {R.shape[0]} rows, scope {scope} needs {len(taps)}")
    Vs = _spatial(V, geometry)
    window = _pad_and_slices(Vs, geometry, scope)
    k = R.shape[1]
    b = Vs.shape[0]
    v = Vs.shape[-2] if with_u else Vs.shape[-1]
    out = np.zeros((b,) + geometry.extents + (k, v), dtype=np.result_type(R, V))
    u_range = range(R.shape[2]) if with_u else (None,)
    for j, tap in enumerate(taps):
        Vtap = window(tap)
        for ju in u_range:
            tap_term(out, R[j], Vtap, ju)
    return out.reshape(b, geometry.size, k, v)


def position_lambdas_conv(R, V, scope=None, geometry: Geometry | None = None):
    """(n+1)-d convolution: value depth treated as an extra spatial axis.

    R: [r, k] or [r, k, u]; V: [b, n_total, v] or [b, n_total, v, u];
    returns lambda_p [b, n_total, k, v].
    """

    def tap_term(out, Rj, Vtap, ju):
        if ju is None:
            # kernel [k] broadcast over the v "spatial" axis
            out += Rj.reshape((1,) * (out.ndim - 2) + (-1, 1)) * Vtap[..., None, :]
        else:
            out += Rj[:, ju].reshape((1,) * (out.ndim - 2) + (-1, 1)) * (
                Vtap[..., ju][..., None, :]
            )

    return _accumulate(R, V, scope, geometry, tap_term)


def position_lambdas_depthwise(R, V, scope=None, geometry: Geometry | None = None):
    """n-d depthwise convolution with channel multiplier k.

    The compact embeddings are tiled across value channels ([r, k] ->
    [r, v, k] kernel); each channel is convolved independently and the
    [.., v, k] result transposed to [.., k, v].  Bit-identical to
    ``position_lambdas_conv``.
    """
    R = np.asarray(R)
    with_u = R.ndim == 3
    v = np.asarray(V).shape[2]  # V is [b, n_total, v] or [b, n_total, v, u]
    # channel-multiplier layout: one kernel column per (input channel, multiple)
    tiled = np.tile(R[:, None], (1, v) + (1,) * (R.ndim - 1))  # [r, v, k(, u)]

    # accumulate in [.., v, k] depthwise layout, then transpose to [.., k, v]
    scope_checked = _check_scope(scope, geometry)
    taps = _taps(scope_checked)
    if R.shape[0] != len(taps):
        raise ShapeError(
            f"R has {R.shape[0]} rows, scope {scope_checked} needs {len(taps)}"
        )
    Vs = _spatial(V, geometry)
    window = _pad_and_slices(Vs, geometry, scope_checked)
    b, k = Vs.shape[0], R.shape[1]
    out = np.zeros((b,) + geometry.extents + (v, k), dtype=np.result_type(R, V))
    u_range = range(R.shape[2]) if with_u else (None,)
    for j in range(len(taps)):
        Vtap = window(taps[j])
        for ju in u_range:
            if ju is None:
                out += tiled[j] * Vtap[..., None]
            else:
                out += tiled[j][..., ju] * Vtap[..., ju][..., None]
    out = np.swapaxes(out, -1, -2)
    return np.ascontiguousarray(out).reshape(b, geometry.size, k, v)


def position_lambdas_conv_backward(R, V, scope, geometry: Geometry, d_lam):
    """Gradients of the tap-loop position lambdas.

    d_lam: [b, n_total, k, v] upstream.  Returns (dR, dV) shaped like R and V.
    """
    R, V, d_lam = np.asarray(R), np.asarray(V), np.asarray(d_lam)
    scope = _check_scope(scope, geometry)
    with_u = R.ndim == 3
    taps = _taps(scope)
    if R.shape[0] != len(taps):
        raise ShapeError(f"R has {R.shape[0]} rows, scope {scope} needs {len(taps)}")
    Vs = _spatial(V, geometry)
    window = _pad_and_slices(Vs, geometry, scope)
    b = Vs.shape[0]
    ds = d_lam.reshape((b,) + geometry.extents + d_lam.shape[2:])  # [b, ..., k, v]
    dR = np.zeros_like(R, dtype=float)
    halves = [(s - 1) // 2 for s in scope]
    pad = [(0, 0)] + [(h, h) for h in halves] + [(0, 0)] * (Vs.ndim - 1 - len(halves))
    dVp = np.zeros(np.pad(Vs, pad).shape, dtype=float)
    for j, tap in enumerate(taps):
        Vtap = window(tap)  # [b, ..., v] or [b, ..., v, u]
        idx = [slice(None)]
        for ax, d in enumerate(tap):
            start = d + halves[ax]
            idx.append(slice(start, start + geometry.extents[ax]))
        k_ = R.shape[1]
        if with_u:
            dsf = ds.reshape(-1, k_, ds.shape[-1])
            Vf = Vtap.reshape(-1, Vtap.shape[-2], Vtap.shape[-1])
            dR[j] = np.einsum("akv,avu->ku", dsf, Vf)
            dVp[tuple(idx)] += np.einsum("ku,...kv->...vu", R[j], ds)
        else:
            dsf = ds.reshape(-1, k_, ds.shape[-1])
            Vf = Vtap.reshape(-1, Vtap.shape[-1])
            dR[j] = np.einsum("akv,av->k", dsf, Vf)
            dVp[tuple(idx)] += np.einsum("k,...kv->...v", R[j], ds)
    center = [slice(None)]
    for ax, h in enumerate(halves):
        center.append(slice(h, h + geometry.extents[ax]))
    dV = dVp[tuple(center)]
    return dR, dV.reshape(V.shape)
