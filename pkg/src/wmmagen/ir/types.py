"""Element, memref, vector and fragment types."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .affine import AffineMap

WMMA_M = WMMA_N = WMMA_K = 16


class ElemType(Enum):
    F16 = "f16"
    F32 = "f32"

    @property
    def nbytes(self) -> int:
        return 2 if self is ElemType.F16 else 4

    @property
    def dtype(self):
        return np.float16 if self is ElemType.F16 else np.float32

    @staticmethod
    def parse(text: str) -> "ElemType":
        try:
            return ElemType(text.lower())
        except ValueError:
            raise ValueError(f"unknown element type {text!r}") from None

    def __str__(self):
        return self.value


class MemorySpace(IntEnum):
    GLOBAL = 0
    SHARED = 3
    FRAGMENT = 5


@dataclass(frozen=True)
class MemRefType:
    shape: tuple
    elem: ElemType
    layout: AffineMap
    space: MemorySpace = MemorySpace.GLOBAL

    def __post_init__(self):
        if self.layout.num_dims != len(self.shape):
            raise ValueError("memref layout arity differs from its rank")
        if any(s <= 0 for s in self.shape):
            raise ValueError(f"memref extents must be positive, got {self.shape}")

    @staticmethod
    def row_major(shape, elem: ElemType, space: MemorySpace = MemorySpace.GLOBAL,
                  alloc_shape=None) -> "MemRefType":
        shape = tuple(int(s) for s in shape)
        alloc = tuple(alloc_shape) if alloc_shape is not None else shape
        if len(alloc) != len(shape) or any(a < s for a, s in zip(alloc, shape)):
            raise ValueError(f"allocation {alloc} cannot hold logical shape {shape}")
        strides = [1] * len(shape)
        for d in range(len(shape) - 2, -1, -1):
            strides[d] = strides[d + 1] * alloc[d + 1]
        return MemRefType(shape, elem, AffineMap.strided(strides), space)

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def strides(self) -> tuple:
        (expr,) = self.layout.results
        return tuple(expr.coeff(f"d{i}") for i in range(self.rank))

    @property
    def alloc_shape(self) -> tuple:
        """Allocated extents implied by the strided layout."""
        strides = self.strides
        out = [self.shape[0]]
        for d in range(1, self.rank):
            out.append(strides[d - 1] // strides[d])
        return tuple(out)

    @property
    def row_stride(self) -> int:
        return self.strides[-2] if self.rank >= 2 else 1

    @property
    def footprint(self) -> int:
        """Number of elements spanned by the layout (allocation size)."""
        return math.prod(self.alloc_shape)

    @property
    def nbytes(self) -> int:
        return self.footprint * self.elem.nbytes

    @property
    def is_padded(self) -> bool:
        return self.alloc_shape != self.shape

    def offset_expr(self, indices):
        (expr,) = self.layout.compose_exprs(indices)
        return expr

    def with_leading_padding(self, pad: int) -> "MemRefType":
        alloc = list(self.shape)
        alloc[-1] += pad
        return MemRefType.row_major(self.shape, self.elem, self.space, alloc)

    def __str__(self):
        dims = "x".join(str(s) for s in self.alloc_shape)
        space = f", {int(self.space)}" if self.space != MemorySpace.GLOBAL else ""
        return f"memref<{dims}x{self.elem}{space}>"


@dataclass(frozen=True)
class VectorType:
    width: int
    elem: ElemType

    def __str__(self):
        return f"vector<{self.width}x{self.elem}>"


class FragmentRole(Enum):
    MAT_A = "a"
    MAT_B = "b"
    ACCUM = "c"


@dataclass(frozen=True)
class FragmentType:
    role: FragmentRole
    elem: ElemType
    m: int = WMMA_M
    n: int = WMMA_N
    k: int = WMMA_K

    @property
    def tile_shape(self) -> tuple:
        if self.role is FragmentRole.MAT_A:
            return (self.m, self.k)
        if self.role is FragmentRole.MAT_B:
            return (self.k, self.n)
        return (self.m, self.n)

    def __str__(self):
        return f"!wmma<{self.role.value}, {self.m}x{self.n}x{self.k}, {self.elem}>"


ValueType = "ElemType | VectorType | FragmentType"
