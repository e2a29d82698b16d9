"""Loop-carried memory dependence test for constant-trip-count loop nests.

Each access inside the tested loop ``L`` is rewritten so that every inner
induction variable ``v = lb(v) + step * t_v`` is replaced by a fresh offset
``t_v`` ranging over ``[0, trip - 1]``.  A pair of accesses (at least one a
write) can conflict across two distinct iterations ``x1 != x2`` of ``L`` only
if, in every dimension, the difference of the two index expressions can be
zero.  Per dimension we bound the inner-offset part by interval arithmetic
and look for a nonzero iteration distance that fits; one dimension without a
solution proves independence.  The test is conservative (it may report a
dependence that cannot happen) but never misses one.

Two refinements for shared-memory staging buffers:

* *privatizable*: the first access to the buffer in an iteration of ``L`` is
  a copy nest that overwrites the whole buffer, so each iteration could own a
  private copy.  Used when marking loops parallel (blocks get their own
  shared memory on the GPU).
* *idempotent*: additionally, the copy writes the same values at the same
  addresses in every iteration of ``L``.  Lock-step (vectorized) execution of
  such a loop is then equivalent to sequential execution, which is what the
  interpreter and the warp mapping rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..ir.affine import AffineExpr, Dim
from ..ir.nodes import Loop, Op, OpKind, is_copy_root, walk
from ..ir.types import MemorySpace

RULE_STRICT = "strict"
RULE_PRIVATIZE = "privatize"
RULE_LANES = "lanes"


@dataclass
class _Access:
    op: Op
    dims: list          # per-dimension expression over x, outer ivs and offsets
    ranges: dict        # offset name -> trip count
    copy_root: Loop | None
    extents: tuple      # per-dimension access width (vector / fragment tiles)


@dataclass(frozen=True)
class Dependence:
    buffer: str
    first: str
    second: str
    first_op: object = field(default=None, compare=False, repr=False)
    second_op: object = field(default=None, compare=False, repr=False)

    def __str__(self):
        return f"{self.buffer}: {self.first} <-> {self.second}"


def _offset(iv: str) -> str:
    return f"@t.{iv}"


def _access_extents(op: Op, buffer_type) -> tuple:
    rank = buffer_type.rank
    ext = [1] * rank
    if op.kind is OpKind.VECTOR_LOAD:
        ext[-1] = op.type.width
    elif op.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
        ext[-2], ext[-1] = 16, 16
    return tuple(ext)


def _collect(loop: Loop, module, func, value_types) -> list:
    accesses = []

    def rec(nodes, chain, copy_root):
        for n in nodes:
            if isinstance(n, Loop):
                root = copy_root if copy_root is not None else (n if is_copy_root(n) else None)
                rec(n.body, chain + [n], root)
            elif n.is_read or n.is_write:
                ranges = {}
                # innermost first: each inner iv becomes lb + step * offset
                exprs = list(n.indices)
                for lp in reversed(chain):
                    t = _offset(lp.iv)
                    ranges[t] = lp.trip_count
                    repl = lp.lower + AffineExpr.dim(t) * lp.step
                    exprs = [e.substitute({lp.iv: repl}) for e in exprs]
                mt = module.buffer_type(n.buffer, func)
                ext = list(_access_extents(n, mt))
                if n.kind is OpKind.VECTOR_STORE:
                    vt = value_types.get(n.operands[0])
                    ext[-1] = vt.width if vt is not None else 1
                accesses.append(_Access(n, exprs, ranges, copy_root, tuple(ext)))

    rec(loop.body, [], None)
    return accesses


def _split(expr: AffineExpr, x: str):
    """Return (coefficient of x, offset terms, outer terms, const) or None if nonlinear."""
    cx = 0
    offs = {}
    outer = []
    for atom, c in expr.terms:
        if not isinstance(atom, Dim):
            return None
        if atom.name == x:
            cx = c
        elif atom.name.startswith("@t."):
            offs[atom.name] = c
        else:
            outer.append((atom.name, c))
    return cx, offs, tuple(outer), expr.const


def _interval(offs: dict, ranges: dict, width: int):
    lo = hi = 0
    for name, c in offs.items():
        span = c * (ranges[name] - 1)
        lo += min(0, span)
        hi += max(0, span)
    return lo, hi + (width - 1)


def _dim_may_conflict(ew, ex, wr, xr, x: str, x_step: int, x_trip: int, width_w: int, width_x: int) -> bool:
    sw, sx = _split(ew, x), _split(ex, x)
    if sw is None or sx is None:
        return True
    cw, ow, outw, kw = sw
    cx, ox, outx, kx = sx
    if outw != outx or cw != cx:
        return True
    # addr_w(x1) == addr_x(x2)  <=>  c*(x1 - x2) = (X part) - (W part)
    lo_w, hi_w = _interval(ow, wr, width_w)
    lo_x, hi_x = _interval(ox, xr, width_x)
    lo = lo_x - hi_w + (kx - kw)
    hi = hi_x - lo_w + (kx - kw)
    g = cw * x_step
    if g == 0:
        return lo <= 0 <= hi
    if g < 0:
        g, lo, hi = -g, -hi, -lo
    dmin, dmax = math.ceil(lo / g), math.floor(hi / g)
    dmin, dmax = max(dmin, -(x_trip - 1)), min(dmax, x_trip - 1)
    if dmin > dmax:
        return False
    return not (dmin == dmax == 0)


def _pair_may_conflict(a: _Access, b: _Access, loop: Loop) -> bool:
    for d in range(len(a.dims)):
        if not _dim_may_conflict(a.dims[d], b.dims[d], a.ranges, b.ranges, loop.iv, loop.step,
                                 loop.trip_count, a.extents[d], b.extents[d]):
            return False
    return True


def copy_covers(root: Loop, module, func) -> str | None:
    """Name of the buffer a copy nest fully overwrites, else None."""
    inner = [n for n in root.body if isinstance(n, Loop)]
    if len(inner) != 1:
        return None
    inner = inner[0]
    stores = [n for n in inner.body if isinstance(n, Op) and n.is_write]
    if len(stores) != 1:
        return None
    st = stores[0]
    mt = module.buffer_type(st.buffer, func)
    if mt is None or mt.rank != 2:
        return None
    if st.indices != (AffineExpr.dim(root.iv), AffineExpr.dim(inner.iv)):
        return None
    if not (root.lower.is_constant and root.lower.const == 0 and root.step == 1 and root.extent == mt.shape[0]):
        return None
    if not (inner.lower.is_constant and inner.lower.const == 0 and inner.extent == mt.shape[1]):
        return None
    return st.buffer


def _first_access_is_cover(loop: Loop, buffer: str, module, func) -> bool:
    for n, parents in walk(loop.body):
        if isinstance(n, Loop) and is_copy_root(n):
            covered = copy_covers(n, module, func)
            touches = any(isinstance(o, Op) and o.buffer == buffer for o, _ in walk(n.body))
            if covered == buffer:
                return True
            if touches:
                return False
        elif isinstance(n, Op) and n.buffer == buffer:
            return False
    return False


def written_buffers(func) -> set:
    return {n.buffer for n, _ in walk(func.body) if isinstance(n, Op) and n.is_write}


def _copy_idempotent(loop: Loop, buffer: str, accesses, written: set) -> bool:
    for acc in accesses:
        if acc.op.buffer != buffer or not acc.op.is_write:
            continue
        if acc.copy_root is None:
            return False
        if any(_split(e, loop.iv) is None or loop.iv in e.dims() for e in acc.dims):
            return False
        # source reads of the same copy nest must not depend on the loop either
        for src in accesses:
            if src.copy_root is acc.copy_root and src.op.is_read:
                if src.op.buffer in written:
                    return False
                if any(loop.iv in e.dims() for e in src.dims):
                    return False
    return True


def _value_types(func) -> dict:
    out = {}
    for n, _ in walk(func.body):
        if isinstance(n, Op):
            for r in n.results:
                out[r] = n.type
    return out


def loop_dependences(loop: Loop, module, func, rule: str = RULE_PRIVATIZE) -> list:
    """List the memory dependences carried by ``loop`` under ``rule``."""
    if loop.trip_count is None:
        return [Dependence("?", "non-constant trip count", loop.iv)]
    accesses = _collect(loop, module, func, _value_types(func))
    written = written_buffers(func)
    exempt = set()
    if rule in (RULE_PRIVATIZE, RULE_LANES):
        for buf in {a.op.buffer for a in accesses}:
            mt = module.buffer_type(buf, func)
            if mt is None or mt.space != MemorySpace.SHARED:
                continue
            if not _first_access_is_cover(loop, buf, module, func):
                continue
            if rule == RULE_LANES and not _copy_idempotent(loop, buf, accesses, written):
                continue
            exempt.add(buf)
    deps = []
    for i, a in enumerate(accesses):
        if not a.op.is_write or a.op.buffer in exempt:
            continue
        for j, b in enumerate(accesses):
            if b.op.buffer != a.op.buffer:
                continue
            if b.op.is_write and j < i:
                # each write/write pair once
                continue
            if _pair_may_conflict(a, b, loop):
                deps.append(Dependence(a.op.buffer, _describe(a.op), _describe(b.op), a.op, b.op))
    return deps


def _describe(op: Op) -> str:
    idx = ", ".join(e.to_str() for e in op.indices)
    return f"{op.kind.value} {op.buffer}[{idx}]"


def is_parallel(loop: Loop, module, func, rule: str = RULE_PRIVATIZE) -> bool:
    if loop.iter_args:
        return False
    return not loop_dependences(loop, module, func, rule)
