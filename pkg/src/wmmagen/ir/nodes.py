"""IR tree: operations, structured loops, functions and modules.

All nodes are frozen dataclasses; passes build new trees with
``dataclasses.replace``.  Value names and induction-variable names are stored
without the ``%`` sigil.  Buffers are referenced by name: either a function
argument or a module-level global.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Union

from .affine import AffineExpr, index_map
from .types import MemRefType


class OpKind(Enum):
    CONSTANT = "const"
    LOAD = "load"
    STORE = "store"
    VECTOR_LOAD = "vload"
    VECTOR_STORE = "vstore"
    MULF = "mulf"
    ADDF = "addf"
    EXTF = "extf"
    WMMA_LOAD = "wmma.load"
    WMMA_COMPUTE = "wmma.compute"
    WMMA_STORE = "wmma.store"
    BARRIER = "barrier"
    YIELD = "yield"


MEMORY_READS = {OpKind.LOAD, OpKind.VECTOR_LOAD, OpKind.WMMA_LOAD}
MEMORY_WRITES = {OpKind.STORE, OpKind.VECTOR_STORE, OpKind.WMMA_STORE}


def _freeze_attrs(attrs) -> tuple:
    if isinstance(attrs, dict):
        attrs = attrs.items()
    return tuple(sorted((str(k), v) for k, v in attrs))


@dataclass(frozen=True)
class Op:
    kind: OpKind
    results: tuple = ()
    operands: tuple = ()
    buffer: str | None = None
    indices: tuple = ()
    type: object = None
    attrs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "attrs", _freeze_attrs(self.attrs))
        object.__setattr__(self, "results", tuple(self.results))
        object.__setattr__(self, "operands", tuple(self.operands))
        object.__setattr__(self, "indices", tuple(AffineExpr.lift(e) for e in self.indices))

    def attr(self, name, default=None):
        for k, v in self.attrs:
            if k == name:
                return v
        return default

    def with_attrs(self, **updates) -> "Op":
        merged = dict(self.attrs)
        merged.update(updates)
        return replace(self, attrs={k: v for k, v in merged.items() if v is not None})

    @property
    def is_read(self) -> bool:
        return self.kind in MEMORY_READS

    @property
    def is_write(self) -> bool:
        return self.kind in MEMORY_WRITES

    @property
    def index_map(self):
        """``(AffineMap, operand names)`` view of the access indices."""
        return index_map(self.indices)


@dataclass(frozen=True)
class Loop:
    iv: str
    lower: AffineExpr
    upper: AffineExpr
    step: int
    body: tuple
    iter_args: tuple = ()  # ((region argument, initial value), ...)
    results: tuple = ()
    attrs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lower", AffineExpr.lift(self.lower))
        object.__setattr__(self, "upper", AffineExpr.lift(self.upper))
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "iter_args", tuple(tuple(p) for p in self.iter_args))
        object.__setattr__(self, "results", tuple(self.results))
        object.__setattr__(self, "attrs", _freeze_attrs(self.attrs))

    def attr(self, name, default=None):
        for k, v in self.attrs:
            if k == name:
                return v
        return default

    def with_attrs(self, **updates) -> "Loop":
        merged = dict(self.attrs)
        merged.update(updates)
        return replace(self, attrs={k: v for k, v in merged.items() if v is not None and v is not False})

    @property
    def tag(self):
        return self.attr("tag")

    @property
    def extent(self):
        diff = self.upper - self.lower
        return diff.const if diff.is_constant else None

    @property
    def trip_count(self):
        """Static trip count, or None if the bounds are not a constant distance apart."""
        ext = self.extent
        if ext is None or self.step <= 0:
            return None
        return max(0, math.ceil(ext / self.step))

    @property
    def region_args(self) -> tuple:
        return tuple(a for a, _ in self.iter_args)

    @property
    def inits(self) -> tuple:
        return tuple(v for _, v in self.iter_args)


Node = Union[Op, Loop]


@dataclass(frozen=True)
class LaunchConfig:
    grid_x: int
    grid_y: int
    warps_x: int
    warps_y: int
    threads_per_warp: int = 32

    @property
    def warps_per_block(self) -> int:
        return self.warps_x * self.warps_y

    @property
    def block_threads(self) -> int:
        return self.warps_per_block * self.threads_per_warp


# Hardware ids visible inside a launched function body.
HW_IDS = ("bx", "by", "wid", "lane")


@dataclass(frozen=True)
class Global:
    name: str
    type: MemRefType


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple  # ((name, MemRefType), ...)
    body: tuple
    launch: LaunchConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(tuple(a) for a in self.args))
        object.__setattr__(self, "body", tuple(self.body))

    def arg_type(self, name):
        for n, t in self.args:
            if n == name:
                return t
        return None


@dataclass(frozen=True)
class Module:
    globals: tuple = ()
    funcs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "globals", tuple(self.globals))
        object.__setattr__(self, "funcs", tuple(self.funcs))

    @property
    def func(self) -> Func:
        if len(self.funcs) != 1:
            raise ValueError(f"expected a single function, module has {len(self.funcs)}")
        return self.funcs[0]

    def global_type(self, name):
        for g in self.globals:
            if g.name == name:
                return g.type
        return None

    def buffer_type(self, name, func: Func | None = None) -> MemRefType | None:
        func = func or (self.funcs[0] if self.funcs else None)
        t = func.arg_type(name) if func is not None else None
        return t if t is not None else self.global_type(name)

    def with_body(self, body, func_index: int = 0) -> "Module":
        funcs = list(self.funcs)
        funcs[func_index] = replace(funcs[func_index], body=tuple(body))
        return replace(self, funcs=tuple(funcs))

    def replace_global(self, name, new_type: MemRefType) -> "Module":
        gs = tuple(Global(g.name, new_type) if g.name == name else g for g in self.globals)
        return replace(self, globals=gs)


# --------------------------------------------------------------------------
# traversal helpers


def walk(nodes) -> Iterator[tuple]:
    """Pre-order walk yielding ``(node, enclosing loops)``."""
    stack: list = []

    def rec(ns):
        for n in ns:
            yield n, tuple(stack)
            if isinstance(n, Loop):
                stack.append(n)
                yield from rec(n.body)
                stack.pop()

    yield from rec(nodes)


def ops_in(nodes) -> Iterator[Op]:
    for n, _ in walk(nodes):
        if isinstance(n, Op):
            yield n


def loops_in(nodes) -> Iterator[Loop]:
    for n, _ in walk(nodes):
        if isinstance(n, Loop):
            yield n


def map_loops(nodes, fn) -> tuple:
    """Rebuild ``nodes`` bottom-up, replacing each loop with ``fn(loop)``.

    ``fn`` may return a Loop, a single Op, or a sequence of nodes to splice.
    """
    out = []
    for n in nodes:
        if isinstance(n, Loop):
            inner = replace(n, body=map_loops(n.body, fn))
            res = fn(inner)
            if isinstance(res, (Loop, Op)):
                out.append(res)
            else:
                out.extend(res)
        else:
            out.append(n)
    return tuple(out)


def substitute_nodes(nodes, mapping: dict) -> tuple:
    """Substitute affine expressions for dims in every index and loop bound."""
    if not mapping:
        return tuple(nodes)
    out = []
    for n in nodes:
        if isinstance(n, Op):
            if n.indices:
                n = replace(n, indices=tuple(e.substitute(mapping) for e in n.indices))
            out.append(n)
        else:
            inner = {k: v for k, v in mapping.items() if k != n.iv}
            out.append(replace(
                n,
                lower=n.lower.substitute(mapping),
                upper=n.upper.substitute(mapping),
                body=substitute_nodes(n.body, inner),
            ))
    return tuple(out)


def rename_values(nodes, mapping: dict) -> tuple:
    """Rename SSA value uses and definitions according to ``mapping``."""
    if not mapping:
        return tuple(nodes)
    r = lambda v: mapping.get(v, v)  # noqa: E731
    out = []
    for n in nodes:
        if isinstance(n, Op):
            out.append(replace(n, results=tuple(map(r, n.results)), operands=tuple(map(r, n.operands))))
        else:
            out.append(replace(
                n,
                iter_args=tuple((r(a), r(v)) for a, v in n.iter_args),
                results=tuple(map(r, n.results)),
                body=rename_values(n.body, mapping),
            ))
    return tuple(out)


def defined_values(nodes) -> list:
    out = []
    for n, _ in walk(nodes):
        if isinstance(n, Op):
            out.extend(n.results)
        else:
            out.extend(n.region_args)
            out.extend(n.results)
    return out


class NameGen:
    """Fresh temporary value names that cannot collide with renumbered ones."""

    def __init__(self, prefix: str = "t"):
        self.prefix = prefix
        self.counter = 0

    def __call__(self) -> str:
        self.counter += 1
        return f"{self.prefix}{self.counter}"


def fresh_copy(nodes, gen: NameGen, extra: dict | None = None) -> tuple:
    """Clone nodes giving every defined value a fresh name."""
    mapping = dict(extra or {})
    for name in defined_values(nodes):
        mapping[name] = gen()
    return rename_values(nodes, mapping)


def renumber(module: Module) -> Module:
    """Canonically rename all SSA values to 0, 1, 2, ... in program order."""
    funcs = []
    for f in module.funcs:
        mapping = {v: str(i) for i, v in enumerate(defined_values(f.body))}
        funcs.append(replace(f, body=rename_values(f.body, mapping)))
    return replace(module, funcs=tuple(funcs))


def uses(nodes) -> dict:
    """Map from value name to number of uses inside ``nodes``."""
    counts: dict = {}
    for n, _ in walk(nodes):
        names = n.operands if isinstance(n, Op) else n.inits
        for v in names:
            counts[v] = counts.get(v, 0) + 1
    return counts


def count_kinds(nodes) -> dict:
    counts: dict = {}
    for n, _ in walk(nodes):
        key = n.kind.value if isinstance(n, Op) else "for"
        counts[key] = counts.get(key, 0) + 1
    return counts


def find_loop(nodes, tag) -> Loop | None:
    for lp in loops_in(nodes):
        if lp.tag == tag:
            return lp
    return None


def replace_node(nodes, target, new) -> tuple:
    """Replace the node ``target`` (by identity) with ``new`` (node or sequence)."""
    out = []
    for n in nodes:
        if n is target:
            if isinstance(new, (Op, Loop)):
                out.append(new)
            else:
                out.extend(new)
        elif isinstance(n, Loop):
            out.append(replace(n, body=replace_node(n.body, target, new)))
        else:
            out.append(n)
    return tuple(out)


def is_copy_root(node) -> bool:
    return isinstance(node, Loop) and bool(node.attr("copy")) and not str(node.tag).endswith(".inner")

