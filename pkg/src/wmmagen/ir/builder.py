"""Construction of the naive three-loop matmul starting point."""

from __future__ import annotations

from dataclasses import dataclass

from .affine import dim
from .nodes import Func, Loop, Module, Op, OpKind, renumber
from .types import ElemType, MemRefType


@dataclass(frozen=True)
class ProblemConfig:
    """``C[M][N] += A[M][K] @ B[K][N]`` with f16 inputs and ``accum`` output."""

    M: int
    N: int
    K: int
    accum: ElemType = ElemType.F32

    def __post_init__(self):
        for name in ("M", "N", "K"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not isinstance(self.accum, ElemType):
            object.__setattr__(self, "accum", ElemType.parse(str(self.accum)))


def build_naive_matmul(cfg: ProblemConfig, name: str = "matmul") -> Module:
    acc = cfg.accum
    i, j, k = dim("i"), dim("j"), dim("k")
    body = [
        Op(OpKind.LOAD, ("a",), (), "A", (i, k), ElemType.F16),
        Op(OpKind.LOAD, ("b",), (), "B", (k, j), ElemType.F16),
        Op(OpKind.LOAD, ("c",), (), "C", (i, j), acc),
    ]
    lhs, rhs = "a", "b"
    if acc is ElemType.F32:
        body += [
            Op(OpKind.EXTF, ("ae",), ("a",), type=ElemType.F32),
            Op(OpKind.EXTF, ("be",), ("b",), type=ElemType.F32),
        ]
        lhs, rhs = "ae", "be"
    body += [
        Op(OpKind.MULF, ("p",), (lhs, rhs), type=acc),
        Op(OpKind.ADDF, ("s",), ("c", "p"), type=acc),
        Op(OpKind.STORE, (), ("s",), "C", (i, j)),
    ]
    kl = Loop("k", 0, cfg.K, 1, body, attrs={"tag": "k"})
    jl = Loop("j", 0, cfg.N, 1, [kl], attrs={"tag": "j"})
    il = Loop("i", 0, cfg.M, 1, [jl], attrs={"tag": "i"})
    args = (
        ("A", MemRefType.row_major((cfg.M, cfg.K), ElemType.F16)),
        ("B", MemRefType.row_major((cfg.K, cfg.N), ElemType.F16)),
        ("C", MemRefType.row_major((cfg.M, cfg.N), acc)),
    )
    return renumber(Module((), (Func(name, args, (il,)),)))
