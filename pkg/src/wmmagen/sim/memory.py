"""Flat buffer storage, address computation and bounds checks."""

from __future__ import annotations

import numpy as np

from ..ir.nodes import Op, OpKind
from ..ir.types import MemorySpace, MemRefType

TILE = 16


class SimError(RuntimeError):
    pass


class OutOfBounds(SimError):
    pass


class UninitializedValue(SimError):
    pass


class Deadlock(SimError):
    pass


def access_extent(op: Op, width: int = 1) -> tuple:
    """Elements touched along each of the last two dims: (rows, cols)."""
    if op.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
        return TILE, TILE
    if op.kind in (OpKind.VECTOR_LOAD, OpKind.VECTOR_STORE):
        return 1, width
    return 1, 1


def element_offsets(mt: MemRefType, op: Op, idx: list, width: int = 1):
    """Flat element offsets touched by ``op`` with evaluated indices ``idx``.

    Scalar accesses give the lane shape, vector accesses append a ``width``
    axis and WMMA tiles append ``(16, 16)``.
    """
    rows, cols = access_extent(op, width)
    rank = mt.rank
    for d, (v, size) in enumerate(zip(idx, mt.shape)):
        ext = cols if d == rank - 1 else (rows if d == rank - 2 else 1)
        lo, hi = np.min(v), np.max(v)
        if lo < 0 or hi + ext > size:
            shown = ", ".join(str(np.min(x)) if np.ndim(x) == 0 else f"{np.min(x)}..{np.max(x)}" for x in idx)
            raise OutOfBounds(f"{op.kind.value} {op.buffer}[{shown}] outside shape {mt.shape}")
    strides = mt.strides
    base = 0
    for v, s in zip(idx, strides):
        base = base + np.asarray(v, dtype=np.int64) * s
    base = np.asarray(base, dtype=np.int64)
    if rows == TILE:
        r = np.arange(TILE, dtype=np.int64)[:, None] * mt.row_stride
        return base[..., None, None] + r + np.arange(TILE, dtype=np.int64)
    if cols > 1:
        return base[..., None] + np.arange(cols, dtype=np.int64)
    return base


class Memory:
    """Buffers of one function invocation; shared globals can be re-created per block."""

    def __init__(self, module, func, inputs: dict):
        self.module = module
        self.func = func
        self.types = {}
        self.data = {}
        for name, t in func.args:
            if name not in inputs:
                raise SimError(f"missing input buffer {name!r}")
            self.types[name] = t
            self.data[name] = self._pack(t, inputs[name], name)
        for g in module.globals:
            self.types[g.name] = g.type
        self.reset_shared()

    @staticmethod
    def _pack(t: MemRefType, arr, name) -> np.ndarray:
        arr = np.asarray(arr)
        if arr.shape != t.shape:
            raise SimError(f"input {name!r} has shape {arr.shape}, expected {t.shape}")
        flat = np.zeros(t.footprint, dtype=t.elem.dtype)
        view = flat.reshape(t.alloc_shape)
        view[tuple(slice(0, s) for s in t.shape)] = arr.astype(t.elem.dtype)
        return flat

    def reset_shared(self):
        for g in self.module.globals:
            self.data[g.name] = np.zeros(g.type.footprint, dtype=g.type.elem.dtype)

    def is_shared(self, name) -> bool:
        return self.types[name].space == MemorySpace.SHARED

    def logical(self, name) -> np.ndarray:
        t = self.types[name]
        view = self.data[name].reshape(t.alloc_shape)
        return view[tuple(slice(0, s) for s in t.shape)].copy()

    def outputs(self) -> dict:
        return {name: self.logical(name) for name, _ in self.func.args}

    def read(self, name, off):
        return self.data[name][off]

    def write(self, name, off, value):
        buf = self.data[name]
        value = np.asarray(value).astype(buf.dtype, copy=False)
        off_b, val_b = np.broadcast_arrays(off, value)
        buf[off_b.ravel()] = val_b.ravel()

    def load(self, op: Op, idx, width=1):
        off = element_offsets(self.types[op.buffer], op, idx, width)
        return self.data[op.buffer][off], off

    def store(self, op: Op, idx, value, width=1):
        off = element_offsets(self.types[op.buffer], op, idx, width)
        buf = self.data[op.buffer]
        value = np.asarray(value).astype(buf.dtype, copy=False)
        off_b, val_b = np.broadcast_arrays(off, value)
        buf[off_b.ravel()] = val_b.ravel()
        return off
