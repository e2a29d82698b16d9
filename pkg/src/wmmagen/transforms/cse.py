"""Common-subexpression elimination with a conservative memory model.

Pure ops are keyed on (kind, operands, type, attrs); loads additionally on
buffer and index expressions.  A store to a buffer, or any barrier, kills the
available loads of that buffer (all buffers for a barrier).  Availability
flows from a block into nested loop bodies, minus whatever the loop itself
writes, and never out of a loop body.
"""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, Op, OpKind, rename_values, walk
from .util import finish

_PURE = {OpKind.CONSTANT, OpKind.MULF, OpKind.ADDF, OpKind.EXTF, OpKind.WMMA_COMPUTE}
_LOADS = {OpKind.LOAD, OpKind.VECTOR_LOAD, OpKind.WMMA_LOAD}


def _key(op: Op):
    return (op.kind, op.operands, op.buffer, op.indices, op.type, op.attrs)


def _effects(lp: Loop):
    """(buffers written, whether a barrier occurs) anywhere inside ``lp``."""
    written, barrier = set(), False
    for n, _ in walk(lp.body):
        if isinstance(n, Op):
            if n.is_write:
                written.add(n.buffer)
            elif n.kind is OpKind.BARRIER:
                barrier = True
    return written, barrier


def _kill(avail: dict, buffers=None):
    for k in [k for k in avail if k[0] in _LOADS and (buffers is None or k[2] in buffers)]:
        del avail[k]


def _block(nodes, avail: dict, rename: dict) -> tuple:
    out = []
    for n in nodes:
        if rename:
            (n,) = rename_values((n,), rename)
        if isinstance(n, Loop):
            written, barrier = _effects(n)
            inner = dict(avail)
            if barrier:
                _kill(inner)
            else:
                _kill(inner, written)
            n = replace(n, body=_block(n.body, inner, rename))
            if barrier:
                _kill(avail)
            else:
                _kill(avail, written)
            out.append(n)
            continue
        if n.kind in _PURE or n.kind in _LOADS:
            key = _key(n)
            prev = avail.get(key)
            if prev is not None:
                rename[n.results[0]] = prev
                continue
            avail[key] = n.results[0]
        elif n.is_write:
            _kill(avail, {n.buffer})
        elif n.kind is OpKind.BARRIER:
            _kill(avail)
        out.append(n)
    return tuple(out)


def cse(m: Module) -> Module:
    new = _block(m.func.body, {}, {})
    out = m.with_body(new)
    return finish(out) if out != m else m
