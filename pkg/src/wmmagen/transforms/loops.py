"""Loop permutation and full unrolling."""

from __future__ import annotations

from dataclasses import replace

from ..ir.affine import AffineExpr
from ..ir.nodes import (
    Func, Loop, Module, NameGen, Op, OpKind, fresh_copy, is_copy_root, rename_values, substitute_nodes, walk,
)
from .config import PassError
from .dependence import RULE_STRICT, loop_dependences, written_buffers
from .util import finish


# --------------------------------------------------------------------------
# permutation


def _reduction_ops(nodes) -> set:
    """ids of accumulator loads and stores forming ``x[idx] = x[idx] + ...`` updates."""
    defs = {}
    for n, _ in walk(nodes):
        if isinstance(n, Op):
            for r in n.results:
                defs[r] = n
    out = set()
    for n, _ in walk(nodes):
        if not (isinstance(n, Op) and n.is_write):
            continue
        upd = defs.get(n.operands[0])
        if upd is None:
            continue
        if upd.kind is OpKind.ADDF:
            srcs = [defs.get(v) for v in upd.operands]
        elif upd.kind is OpKind.WMMA_COMPUTE:
            srcs = [defs.get(upd.operands[2])]
        else:
            continue
        for s in srcs:
            if s is not None and s.is_read and s.buffer == n.buffer and s.indices == n.indices:
                out.add(id(n))
                out.add(id(s))
    return out


def _band(body, order):
    """Walk the band ``order`` from the top; return (chain, siblings per level)."""
    top = next((n for n, _ in walk(body) if isinstance(n, Loop) and n.tag == order[0]), None)
    if top is None:
        raise PassError(f"no loop tagged {order[0]!r}")
    chain, before, after = [top], [], []
    for depth, tag in enumerate(order[1:]):
        cur = chain[-1]
        idx = [p for p, n in enumerate(cur.body) if isinstance(n, Loop) and n.tag == tag]
        if len(idx) != 1:
            raise PassError(f"loop tagged {tag!r} is not directly nested in %{cur.iv}")
        p = idx[0]
        pre, post = cur.body[:p], cur.body[p + 1:]
        for s in pre + post:
            if not is_copy_root(s):
                raise PassError(f"imperfect nest: %{cur.iv} holds a non-copy node beside the band")
        before.append(pre)
        after.append(post)
        chain.append(cur.body[p])
    return chain, before, after


def _check_sink(sibling: Loop, newly_enclosing: set, written: set):
    for n, _ in walk(sibling.body):
        if isinstance(n, Op) and n.is_read and n.buffer in written:
            raise PassError(f"copy nest %{sibling.iv} reads {n.buffer}, which the band writes")
    for n, _ in walk((sibling,)):
        exprs = list(n.indices) if isinstance(n, Op) else [n.lower, n.upper]
        for e in exprs:
            bad = e.dims() & newly_enclosing
            if bad:
                raise PassError(f"copy nest %{sibling.iv} depends on %{sorted(bad)[0]} and cannot be sunk")


def permute_loops(m: Module, from_order, to_order) -> Module:
    from_order, to_order = list(from_order), list(to_order)
    if sorted(from_order) != sorted(to_order) or len(set(from_order)) != len(from_order):
        raise PassError(f"{to_order} is not a permutation of {from_order}")
    if from_order == to_order:
        return m
    f = m.func
    chain, before, after = _band(f.body, from_order)
    by_tag = {lp.tag: lp for lp in chain}
    for lp in chain:
        if lp.iter_args:
            raise PassError(f"loop %{lp.iv} carries iter_args and cannot be permuted")

    # bounds may only use loops that stay outside
    placed = set()
    for tag in to_order:
        lp = by_tag[tag]
        band_ivs = {c.iv for c in chain}
        used = (lp.lower.dims() | lp.upper.dims()) & band_ivs
        if used - placed:
            raise PassError(f"bounds of %{lp.iv} use %{sorted(used - placed)[0]}, which would move inside it")
        placed.add(lp.iv)

    inner = chain[-1].body
    written = written_buffers(Func(f.name, f.args, inner))
    for depth in range(len(before)):
        newly = {c.iv for c in chain[depth + 1:]}
        for s in before[depth] + after[depth]:
            _check_sink(s, newly, written)

    # dependences: only reductions may be carried by a permuted loop
    probe = inner
    for lp in reversed(chain):
        probe = (replace(lp, body=probe),)
    probe_func = Func(f.name, f.args, probe)
    red = _reduction_ops(probe)
    for lp in (n for n, _ in walk(probe) if isinstance(n, Loop) and n.tag in by_tag):
        for dep in loop_dependences(lp, m, probe_func, RULE_STRICT):
            if id(dep.first_op) in red and id(dep.second_op) in red:
                continue
            raise PassError(f"permutation would reorder a dependence carried by %{lp.iv}: {dep}")

    body = tuple(x for lvl in before for x in lvl) + tuple(inner)
    body += tuple(x for lvl in reversed(after) for x in lvl)
    for tag in reversed(to_order):
        body = (replace(by_tag[tag], body=body),)

    def rebuild(nodes):
        out = []
        for n in nodes:
            if n is chain[0]:
                out.extend(body)
            elif isinstance(n, Loop):
                out.append(replace(n, body=rebuild(n.body)))
            else:
                out.append(n)
        return tuple(out)

    return finish(m.with_body(rebuild(f.body)))


# --------------------------------------------------------------------------
# unrolling


def _selector(sel):
    if callable(sel):
        return sel
    tags = {sel} if isinstance(sel, str) else set(sel)
    return lambda lp: lp.tag in tags


def unroll_loop(lp: Loop, gen: NameGen):
    if lp.trip_count is None:
        raise PassError(f"loop %{lp.iv} has a non-constant trip count")
    vals = list(lp.inits)
    out = []
    body = lp.body
    has_yield = bool(body) and isinstance(body[-1], Op) and body[-1].kind is OpKind.YIELD
    for t in range(lp.trip_count):
        b = substitute_nodes(body, {lp.iv: lp.lower + AffineExpr.constant(t * lp.step)})
        b = fresh_copy(b, gen, dict(zip(lp.region_args, vals)))
        if has_yield:
            vals = list(b[-1].operands)
            b = b[:-1]
        out.extend(b)
    return out, dict(zip(lp.results, vals))


def _unroll_block(nodes, pred, gen) -> tuple:
    out = []
    rename = {}
    for n in nodes:
        if rename:
            (n,) = rename_values((n,), rename)
        if isinstance(n, Loop):
            n = replace(n, body=_unroll_block(n.body, pred, gen))
            if pred(n):
                new, res = unroll_loop(n, gen)
                out.extend(new)
                rename.update(res)
                continue
        out.append(n)
    return tuple(out)


def unroll_full(m: Module, selector) -> Module:
    """Replace every selected loop by trip-count copies of its body."""
    pred = _selector(selector)
    if not any(pred(n) for n, _ in walk(m.func.body) if isinstance(n, Loop)):
        raise PassError("no loop matches the unroll selector")
    gen = NameGen("u")
    return finish(m.with_body(_unroll_block(m.func.body, pred, gen)))
