"""Raise the scalar multiply-accumulate nest to warp-level WMMA operations."""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, Op, OpKind
from ..ir.types import ElemType, FragmentRole, FragmentType, WMMA_K, WMMA_M, WMMA_N
from .config import PassError, TileConfig
from .util import finish

_INNER = ("iii", "jjj", "kk")


def _match_scalar_body(body, m: Module):
    """Return (load a, load b, load c, store c) of the scalar update or raise."""
    ops = list(body)
    if not all(isinstance(o, Op) for o in ops):
        raise PassError("the innermost loop body must be straight-line code")
    kinds = [o.kind for o in ops]
    loads = [o for o in ops if o.kind is OpKind.LOAD]
    stores = [o for o in ops if o.kind is OpKind.STORE]
    if len(loads) != 3 or len(stores) != 1:
        raise PassError("innermost body is not a scalar multiply-accumulate")
    la, lb, lc = loads
    st = stores[0]
    if lc.buffer != st.buffer or lc.indices != st.indices:
        raise PassError("the accumulator load and store do not address the same element")
    defs = {r: o for o in ops for r in o.results}
    # store(addf(load c, mulf(a', b'))) where a', b' are the loads, possibly extended
    add = defs.get(st.operands[0])
    if add is None or add.kind is not OpKind.ADDF:
        raise PassError("stored value is not an addf")
    mul = next((defs.get(v) for v in add.operands if defs.get(v) is not None and defs[v].kind is OpKind.MULF), None)
    if mul is None or lc.results[0] not in add.operands:
        raise PassError("addf does not combine the accumulator with a product")

    def source(v):
        o = defs.get(v)
        if o is not None and o.kind is OpKind.EXTF:
            o = defs.get(o.operands[0])
        return o

    srcs = [source(v) for v in mul.operands]
    if srcs != [la, lb]:
        raise PassError("mulf does not multiply the A and B loads")
    allowed = {OpKind.LOAD, OpKind.STORE, OpKind.EXTF, OpKind.MULF, OpKind.ADDF}
    if set(kinds) - allowed:
        raise PassError("unexpected operation in the scalar body")
    for o in (la, lb):
        if m.buffer_type(o.buffer).elem is not ElemType.F16:
            raise PassError("matrix operands must be f16")
    return la, lb, lc, st


def raise_to_wmma(m: Module, cfg: TileConfig | None = None) -> Module:
    found = []

    def rec(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop) and n.tag in _INNER:
                out.append(raise_band(n))
            elif isinstance(n, Loop):
                out.append(replace(n, body=rec(n.body)))
            else:
                out.append(n)
        return tuple(out)

    def raise_band(top: Loop) -> Loop:
        chain = [top]
        while len(chain[-1].body) == 1 and isinstance(chain[-1].body[0], Loop):
            chain.append(chain[-1].body[0])
        tags = sorted(lp.tag for lp in chain)
        if tags != sorted(_INNER):
            raise PassError("expected a perfect iii/jjj/kk nest around the scalar body")
        for lp in chain:
            if lp.step != 1:
                raise PassError(f"loop %{lp.iv} already has step {lp.step}")
            if lp.extent is None or lp.extent % 16:
                raise PassError(f"loop %{lp.iv} extent {lp.extent} is not a multiple of 16")
        la, lb, lc, st = _match_scalar_body(chain[-1].body, m)
        acc = m.buffer_type(lc.buffer).elem
        fa = FragmentType(FragmentRole.MAT_A, ElemType.F16, WMMA_M, WMMA_N, WMMA_K)
        fb = FragmentType(FragmentRole.MAT_B, ElemType.F16, WMMA_M, WMMA_N, WMMA_K)
        fc = FragmentType(FragmentRole.ACCUM, acc, WMMA_M, WMMA_N, WMMA_K)

        def ld(buf):
            return {"ld": m.buffer_type(buf).row_stride}

        n = len(found)
        wa, wb, wc, wd = (f"w{r}{n}" for r in "abcd")

        body = (
            Op(OpKind.WMMA_LOAD, (wa,), (), la.buffer, la.indices, fa, ld(la.buffer)),
            Op(OpKind.WMMA_LOAD, (wb,), (), lb.buffer, lb.indices, fb, ld(lb.buffer)),
            Op(OpKind.WMMA_LOAD, (wc,), (), lc.buffer, lc.indices, fc, ld(lc.buffer)),
            Op(OpKind.WMMA_COMPUTE, (wd,), (wa, wb, wc), type=fc),
            Op(OpKind.WMMA_STORE, (), (wd,), st.buffer, st.indices, None, ld(st.buffer)),
        )
        found.append(top)
        for lp in reversed(chain):
            body = (replace(lp, step=16, body=body),)
        return body[0]

    new_body = rec(m.func.body)
    if not found:
        raise PassError("no scalar iii/jjj/kk nest found")
    return finish(m.with_body(new_body))
