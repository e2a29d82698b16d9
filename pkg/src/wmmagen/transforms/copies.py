"""Shared-memory staging of the A and B tiles, and leading-dimension padding."""

from __future__ import annotations

from dataclasses import replace

from ..ir.affine import dim
from ..ir.nodes import Global, Loop, Module, Op, OpKind, is_copy_root, map_loops, walk
from ..ir.types import ElemType, MemorySpace, MemRefType
from .config import MAX_PADDING, SHARED_LIMIT_BYTES, PassError, TileConfig
from .util import finish, find_tagged

A_SMEM = "a_smem"
B_SMEM = "b_smem"


def shared_bytes(m: Module) -> int:
    return sum(g.type.nbytes for g in m.globals if g.type.space == MemorySpace.SHARED)


def _copy_nest(src: str, dst: str, tag: str, rows: int, cols: int, row_base, col_base, rv: str, cv: str) -> Loop:
    r, c = dim(rv), dim(cv)
    v = f"{tag}.v"
    body = (
        Op(OpKind.LOAD, (v,), (), src, (row_base + r, col_base + c), ElemType.F16),
        Op(OpKind.STORE, (), (v,), dst, (r, c)),
    )
    inner = Loop(cv, 0, cols, 1, body, attrs={"tag": f"{tag}.inner", "copy": dst})
    return Loop(rv, 0, rows, 1, (inner,), attrs={"tag": tag, "copy": dst})


def _operand_buffers(m: Module):
    """Names of the A and B arguments: the f16 buffers read by the compute body."""
    f = m.func
    if len(f.args) != 3:
        raise PassError("expected matmul(A, B, C)")
    return f.args[0][0], f.args[1][0], f.args[2][0]


def generate_shared_copies(m: Module, cfg: TileConfig) -> Module:
    if any(g.name in (A_SMEM, B_SMEM) for g in m.globals):
        raise PassError("shared copies already generated")
    a, b, _ = _operand_buffers(m)
    body = m.func.body
    kloop = find_tagged(body, "k")
    iv_i, iv_j, iv_k = find_tagged(body, "i").iv, find_tagged(body, "j").iv, kloop.iv
    a_t = MemRefType.row_major((cfg.tbm, cfg.tbk), ElemType.F16, MemorySpace.SHARED)
    b_t = MemRefType.row_major((cfg.tbk, cfg.tbn), ElemType.F16, MemorySpace.SHARED)
    total = a_t.nbytes + b_t.nbytes
    if total > SHARED_LIMIT_BYTES:
        raise PassError(f"shared tiles need {total} bytes, limit is {SHARED_LIMIT_BYTES}")

    I, J, K = dim(iv_i), dim(iv_j), dim(iv_k)

    def redirect(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop):
                out.append(replace(n, body=redirect(n.body)))
            elif n.buffer == a:
                if n.is_write:
                    raise PassError("A is written inside the k loop")
                r, c = n.indices
                out.append(replace(n, buffer=A_SMEM, indices=(r - I, c - K)))
            elif n.buffer == b:
                if n.is_write:
                    raise PassError("B is written inside the k loop")
                r, c = n.indices
                out.append(replace(n, buffer=B_SMEM, indices=(r - K, c - J)))
            else:
                out.append(n)
        return tuple(out)

    copies = (
        _copy_nest(a, A_SMEM, "copy_a", cfg.tbm, cfg.tbk, I, K, "ar", "ac"),
        _copy_nest(b, B_SMEM, "copy_b", cfg.tbk, cfg.tbn, K, J, "br", "bc"),
    )

    def fn(lp):
        if lp.tag == "k" and lp.iv == iv_k:
            return replace(lp, body=copies + redirect(lp.body))
        return lp

    new_body = map_loops(body, fn)
    out = replace(m, globals=m.globals + (Global(A_SMEM, a_t), Global(B_SMEM, b_t)))
    return finish(out.with_body(new_body))


def pad_shared_buffer(m: Module, cfg: TileConfig) -> Module:
    pads = {A_SMEM: cfg.padding_a, B_SMEM: cfg.padding_b}
    for name, p in pads.items():
        if p < 0 or p % 8 or p > MAX_PADDING:
            raise PassError(f"padding {p} for {name} must be a multiple of 8 between 0 and {MAX_PADDING}")
    if m.global_type(A_SMEM) is None or m.global_type(B_SMEM) is None:
        raise PassError("no shared buffers to pad")
    if not any(pads.values()):
        return m
    out = m
    for name, p in pads.items():
        if p:
            t = m.global_type(name)
            if t.is_padded:
                raise PassError(f"{name} is already padded")
            out = out.replace_global(name, t.with_leading_padding(p))
    total = shared_bytes(out)
    if total > SHARED_LIMIT_BYTES:
        raise PassError(f"padded shared tiles need {total} bytes, limit is {SHARED_LIMIT_BYTES}")
    return finish(out.with_body(update_leading_dims(out, out.func.body)))


def update_leading_dims(m: Module, nodes) -> tuple:
    """Refresh ``ld`` attributes of WMMA memory ops after a layout change."""
    out = []
    for n in nodes:
        if isinstance(n, Loop):
            out.append(replace(n, body=update_leading_dims(m, n.body)))
        elif n.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
            out.append(n.with_attrs(ld=m.buffer_type(n.buffer).row_stride))
        else:
            out.append(n)
    return tuple(out)


def copy_roots(nodes) -> list:
    return [n for n, _ in walk(nodes) if is_copy_root(n)]
