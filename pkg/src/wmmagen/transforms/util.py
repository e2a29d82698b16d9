"""Small tree-rewriting helpers shared by the passes."""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, Op, OpKind, count_kinds, loops_in, renumber
from .config import PassError


def rewrite_blocks(nodes, fn) -> tuple:
    """Apply ``fn(block) -> block`` to every block, innermost blocks first."""
    out = []
    for n in nodes:
        if isinstance(n, Loop):
            n = replace(n, body=rewrite_blocks(n.body, fn))
        out.append(n)
    return tuple(fn(tuple(out)))


def find_tagged(nodes, tag) -> Loop:
    for lp in loops_in(nodes):
        if lp.tag == tag:
            return lp
    raise PassError(f"no loop tagged {tag!r}")


def enclosing_ivs(nodes, target) -> list:
    """Induction variables of the loops enclosing ``target`` (outermost first)."""

    def rec(ns, chain):
        for n in ns:
            if n is target:
                return chain
            if isinstance(n, Loop):
                found = rec(n.body, chain + [n.iv])
                if found is not None:
                    return found
        return None

    return rec(nodes, []) or []


def structural_delta(before: Module, after: Module) -> dict:
    """Per-kind op and loop count changes plus shared allocation changes."""
    b = {}
    a = {}
    for f in before.funcs:
        for k, v in count_kinds(f.body).items():
            b[k] = b.get(k, 0) + v
    for f in after.funcs:
        for k, v in count_kinds(f.body).items():
            a[k] = a.get(k, 0) + v
    delta = {}
    for k in sorted(set(a) | set(b)):
        d = a.get(k, 0) - b.get(k, 0)
        if d:
            delta[k] = f"{d:+d}"
    gb = {g.name: g.type.nbytes for g in before.globals}
    ga = {g.name: g.type.nbytes for g in after.globals}
    if gb != ga:
        delta["shared_bytes"] = f"{sum(gb.values())}->{sum(ga.values())}"
    return delta


def finish(module: Module) -> Module:
    return renumber(module)


def is_barrier(n) -> bool:
    return isinstance(n, Op) and n.kind is OpKind.BARRIER
