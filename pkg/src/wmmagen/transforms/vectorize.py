"""Vectorize the element-wise global-to-shared copy nests."""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, Op, OpKind
from ..ir.types import VectorType
from .config import SCALAR_COPIES, VECTOR_BITS, PassError
from .util import finish


def _vectorize_inner(inner: Loop, m: Module, bits: int) -> Loop:
    ops = list(inner.body)
    if len(ops) != 2 or any(not isinstance(o, Op) for o in ops):
        raise PassError(f"copy loop %{inner.iv} is not a load/store pair")
    ld, st = ops
    if ld.kind is OpKind.VECTOR_LOAD:
        raise PassError(f"copy loop %{inner.iv} is already vectorized")
    if ld.kind is not OpKind.LOAD or st.kind is not OpKind.STORE or st.operands != ld.results:
        raise PassError(f"copy loop %{inner.iv} is not a load/store pair")
    elem = m.buffer_type(ld.buffer).elem
    if m.buffer_type(st.buffer).elem is not elem:
        raise PassError(f"copy loop %{inner.iv} converts element types")
    width = bits // (8 * elem.nbytes)
    if inner.step != 1:
        raise PassError(f"copy loop %{inner.iv} has step {inner.step}")
    if inner.extent is None or inner.extent % width:
        raise PassError(f"copy loop %{inner.iv}: extent {inner.extent} is not a multiple of {width}")
    for op in (ld, st):
        *outer, last = op.indices
        mt = m.buffer_type(op.buffer)
        if last.coeff(inner.iv) != 1 or any(inner.iv in e.dims() for e in outer):
            raise PassError(f"copy loop %{inner.iv}: {op.buffer} is not contiguous along %{inner.iv}")
        if mt.row_stride % width:
            raise PassError(f"copy loop %{inner.iv}: row stride of {op.buffer} breaks {bits}-bit alignment")
    vt = VectorType(width, elem)
    body = (
        replace(ld, kind=OpKind.VECTOR_LOAD, type=vt),
        replace(st, kind=OpKind.VECTOR_STORE),
    )
    return replace(inner, step=width, body=body)


def vectorize_copies(m: Module, vector_bits: int = 128) -> Module:
    """Turn the inner copy loops into ``vector_bits``-wide vector copies; 0 keeps scalar copies."""
    if vector_bits == SCALAR_COPIES:
        return m
    if vector_bits not in VECTOR_BITS:
        raise PassError(f"vector width {vector_bits} must be one of {VECTOR_BITS}")
    count = []

    def rec(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop) and n.attr("copy") and str(n.tag).endswith(".inner"):
                out.append(_vectorize_inner(n, m, vector_bits))
                count.append(n)
            elif isinstance(n, Loop):
                out.append(replace(n, body=rec(n.body)))
            else:
                out.append(n)
        return tuple(out)

    new = rec(m.func.body)
    if not count:
        return m
    return finish(m.with_body(new))
