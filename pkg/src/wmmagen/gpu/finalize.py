"""Decouple the global loads of the in-loop copies from their shared stores.

The copy loops inside the pipelined k loop are unrolled; their global loads
move to the top of the loop body (right after the leading barrier) and the
shared stores stay at the end, after the second barrier::

    for k {pipelined} {
      barrier
      v0 = vload A[...k + step...]     // next tiles, kept in registers
      ...compute on the current tiles...
      barrier
      vstore v0, a_smem[...]
      yield ...
    }
"""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, NameGen, Op, OpKind, is_copy_root
from ..transforms.config import PassError
from ..transforms.loops import unroll_loop
from ..transforms.pipeline import PIPELINED
from ..transforms.util import is_barrier
from .kernel import GpuKernel


def _finalize_loop(lp: Loop, gen: NameGen) -> Loop:
    body = list(lp.body)
    tail = []
    if body and isinstance(body[-1], Op) and body[-1].kind is OpKind.YIELD:
        tail = [body.pop()]
    start = len(body)
    while start > 0 and is_copy_root(body[start - 1]):
        start -= 1
    copies, head = body[start:], body[:start]
    if not copies:
        return lp
    loads, stores = [], []
    for c in copies:
        if c.trip_count is None:
            raise PassError(f"copy loop %{c.iv} has a non-constant trip count")
        flat, _ = unroll_loop(c, gen)
        for op in flat:
            if not isinstance(op, Op):
                raise PassError(f"copy loop %{c.iv} holds a nested loop after mapping")
            (loads if op.is_read else stores).append(op)
    lead = 1 if head and is_barrier(head[0]) else 0
    new_body = head[:lead] + loads + head[lead:] + stores + tail
    return replace(lp, body=tuple(new_body))


def finalize_pipeline(k: GpuKernel) -> GpuKernel:
    gen = NameGen("f")
    changed = []

    def rec(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop) and n.attr(PIPELINED):
                new = _finalize_loop(replace(n, body=rec(n.body)), gen)
                changed.append(new is not n)
                out.append(new)
            elif isinstance(n, Loop):
                out.append(replace(n, body=rec(n.body)))
            else:
                out.append(n)
        return tuple(out)

    body = rec(k.body)
    if not any(changed):
        return k
    return k.with_body(body)
