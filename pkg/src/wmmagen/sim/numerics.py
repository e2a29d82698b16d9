"""Element-wise arithmetic with explicit rounding.

f32 results are computed in float32, which numpy rounds correctly per op.
f16 results are computed in float64 and rounded once to float16; doing the
work in float16 (or float32) directly would round twice for some additions.
"""

from __future__ import annotations

import numpy as np

from ..ir.types import ElemType

WMMA_TILE = 16


def as_elem(x, elem: ElemType):
    return np.asarray(x).astype(elem.dtype)


def extf(x):
    return np.asarray(x).astype(np.float32)


def mulf(a, b, elem: ElemType):
    if elem is ElemType.F32:
        return np.multiply(np.asarray(a, np.float32), np.asarray(b, np.float32))
    return (np.asarray(a, np.float64) * np.asarray(b, np.float64)).astype(np.float16)


def addf(a, b, elem: ElemType):
    if elem is ElemType.F32:
        return np.add(np.asarray(a, np.float32), np.asarray(b, np.float32))
    return (np.asarray(a, np.float64) + np.asarray(b, np.float64)).astype(np.float16)


def wmma_mma(a, b, c, elem: ElemType):
    """``D = A @ B + C`` on trailing 16x16 tiles.

    Accumulation runs over k ascending with one rounding to ``elem`` per
    multiply-add step.  Products of two f16 values are exact in float32, and
    for an f32 accumulator the float32 addition is the correctly rounded sum,
    so the f32 path needs no float64 detour.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if elem is ElemType.F32:
        prod = a.astype(np.float32)[..., :, :, None] * b.astype(np.float32)[..., None, :, :]
        c32 = np.asarray(c, np.float32)
        shape = np.broadcast_shapes(c32.shape, prod.shape[:-3] + (WMMA_TILE, WMMA_TILE))
        if c32.shape != shape:
            c32 = np.broadcast_to(c32, shape)
        if prod.shape[:-3] != shape[:-2]:
            prod = np.broadcast_to(prod, shape[:-2] + prod.shape[-3:])
        # accumulate is strictly sequential along the axis, unlike add.reduce
        stack = np.concatenate([c32[..., :, None, :], prod], axis=-2)
        return np.add.accumulate(stack, axis=-2)[..., -1, :]
    # products laid out as (..., k, i, j) so each step reads a contiguous slab
    prod = np.swapaxes(a.astype(np.float64), -1, -2)[..., :, :, None] * b.astype(np.float64)[..., :, None, :]
    shape = np.broadcast_shapes(np.shape(c), prod.shape[:-3] + (WMMA_TILE, WMMA_TILE))
    acc16 = np.empty(shape, np.float16)
    acc16[...] = c
    acc = acc16.astype(np.float64)
    for k in range(prod.shape[-3]):
        np.add(acc, prod[..., k, :, :], out=acc)
        acc16[...] = acc  # one rounding to f16 per step
        acc[...] = acc16
    return acc16


def wmma_reference(a, b, c, elem: ElemType):
    """Scalar Python oracle for :func:`wmma_mma` on a single tile."""
    dt = elem.dtype
    out = np.empty((WMMA_TILE, WMMA_TILE), dtype=dt)
    for i in range(WMMA_TILE):
        for j in range(WMMA_TILE):
            acc = float(c[i, j])
            for k in range(WMMA_TILE):
                acc = float(dt(acc + float(a[i, k]) * float(b[k, j])))
            out[i, j] = acc
    return out
