"""Keep accumulator tiles in registers across the thread-block k loop.

Inside the k loop, WMMA loads of C are forwarded from the most recent value
of the same tile and intermediate stores are dropped.  The first load of each
tile moves in front of the loop and becomes an ``iter_args`` initial value;
the final values are yielded and stored once after the loop.
"""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, NameGen, Op, OpKind, rename_values, walk
from ..ir.types import FragmentRole, FragmentType
from .util import finish


class _Abort(Exception):
    pass


def _is_accum(op: Op) -> bool:
    if op.kind is OpKind.WMMA_LOAD:
        return isinstance(op.type, FragmentType) and op.type.role is FragmentRole.ACCUM
    return op.kind is OpKind.WMMA_STORE


def _accum_buffers(kloop: Loop) -> set:
    return {n.buffer for n, _ in walk(kloop.body) if isinstance(n, Op) and _is_accum(n)}


def _disjoint(keys):
    keys = list(keys)
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            (ba, ia), (bb, ib) = keys[a], keys[b]
            if ba != bb:
                continue
            diffs = [x - y for x, y in zip(ia, ib)]
            if not all(d.is_constant for d in diffs):
                raise _Abort(f"cannot prove tiles {ia} and {ib} of {ba} disjoint")
            if all(abs(d.const) < 16 for d in diffs):
                raise _Abort(f"tiles {ia} and {ib} of {ba} overlap")


def _hoist(kloop: Loop, module: Module, gen: NameGen):
    if kloop.iter_args:
        raise _Abort("k loop already carries values")
    bufs = _accum_buffers(kloop)
    if not bufs:
        raise _Abort("no accumulator loads in the k loop")
    cur, hoisted, store_attrs = {}, [], {}
    rename = {}
    body = []
    for n in kloop.body:
        if rename:
            (n,) = rename_values((n,), rename)
        if isinstance(n, Loop):
            for o, _ in walk(n.body):
                if isinstance(o, Op) and o.buffer in bufs:
                    raise _Abort(f"accumulator access inside nested loop %{n.iv}")
            body.append(n)
            continue
        if n.buffer not in bufs:
            body.append(n)
            continue
        if n.kind not in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
            raise _Abort(f"scalar access to accumulator {n.buffer}")
        if any(kloop.iv in e.dims() for e in n.indices):
            raise _Abort(f"accumulator access {n.buffer} varies with %{kloop.iv}")
        key = (n.buffer, n.indices)
        if n.kind is OpKind.WMMA_LOAD:
            if key in cur:
                rename[n.results[0]] = cur[key]
            else:
                arg = gen()
                hoisted.append((key, replace(n, results=(gen(),)), arg))
                cur[key] = arg
                rename[n.results[0]] = arg
        else:
            if key not in cur:
                raise _Abort(f"accumulator tile {key[0]}{key[1]} stored before it is loaded")
            cur[key] = n.operands[0]
            store_attrs[key] = n.attrs
    _disjoint(key for key, _, _ in hoisted)
    results = [gen() for _ in hoisted]
    body.append(Op(OpKind.YIELD, (), tuple(cur[key] for key, _, _ in hoisted)))
    new_loop = replace(
        kloop,
        body=tuple(body),
        iter_args=tuple((arg, load.results[0]) for _, load, arg in hoisted),
        results=tuple(results),
    )
    pre = [load for _, load, _ in hoisted]
    post = [
        Op(OpKind.WMMA_STORE, (), (res,), key[0], key[1], None, store_attrs[key])
        for (key, _, _), res in zip(hoisted, results)
        if key in store_attrs
    ]
    return pre + [new_loop] + post


def hoist_accumulator_with_note(m: Module):
    """Like :func:`hoist_accumulator` but also returns why nothing changed, if so."""
    gen = NameGen("h")
    found = []

    def rec(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop) and n.tag == "k":
                out.extend(_hoist(n, m, gen))
                found.append(n)
            elif isinstance(n, Loop):
                out.append(replace(n, body=rec(n.body)))
            else:
                out.append(n)
        return tuple(out)

    try:
        new = rec(m.func.body)
    except _Abort as exc:
        return m, f"aborted: {exc}"
    if not found:
        return m, "aborted: no loop tagged 'k'"
    return finish(m.with_body(new)), None


def hoist_accumulator(m: Module) -> Module:
    """Hoist C tiles out of the loop tagged ``k``; returns ``m`` unchanged if not applicable."""
    return hoist_accumulator_with_note(m)[0]
