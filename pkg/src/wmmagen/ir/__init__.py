"""IR definitions, textual format, verifier and the naive matmul builder."""

from .affine import AffineExpr, AffineMap, const, dim
from .builder import ProblemConfig, build_naive_matmul
from .nodes import (
    Func, Global, LaunchConfig, Loop, Module, Op, OpKind, count_kinds, loops_in, ops_in, renumber, walk,
)
from .parser import IRSyntaxError, IRVerifyError, parse_affine, parse_ir
from .printer import print_ir
from .types import ElemType, FragmentRole, FragmentType, MemorySpace, MemRefType, VectorType
from .verifier import Diagnostic, trip_counts, verify

__all__ = [
    "AffineExpr", "AffineMap", "const", "dim", "ProblemConfig", "build_naive_matmul", "Func", "Global",
    "LaunchConfig", "Loop", "Module", "Op", "OpKind", "count_kinds", "loops_in", "ops_in", "renumber", "walk",
    "IRSyntaxError", "IRVerifyError", "parse_affine", "parse_ir", "print_ir", "ElemType", "FragmentRole", "FragmentType",
    "MemorySpace", "MemRefType", "VectorType", "Diagnostic", "trip_counts", "verify",
]
