"""One-stage software pipelining of the k loop, and barrier placement.

After :func:`split_pipeline` the k loop has the shape::

    copies(k = lb)                          // prologue
    for k = lb to ub - step {pipelined} {
      compute(k)                            // reads the tiles staged last time
      copies(k + step)                      // stage the next tiles
    }
    compute(k = ub - step)                  // epilogue

Compute precedes the copies inside the loop so that sequential execution of
the module stays equivalent to the original; the GPU-level
``finalize_pipeline`` later hoists the global loads of the copies above the
compute and leaves only the shared stores at the end.
"""

from __future__ import annotations

from dataclasses import replace

from ..ir.affine import AffineExpr
from ..ir.nodes import Loop, Module, NameGen, Op, OpKind, fresh_copy, is_copy_root, rename_values, substitute_nodes
from .config import PassError
from .util import finish, is_barrier

PIPELINED = "pipelined"


def _split_k(kloop: Loop):
    body = list(kloop.body)
    yield_op = None
    if body and isinstance(body[-1], Op) and body[-1].kind is OpKind.YIELD:
        yield_op = body.pop()
    n_copies = 0
    while n_copies < len(body) and is_copy_root(body[n_copies]):
        n_copies += 1
    copies, compute = body[:n_copies], body[n_copies:]
    if not copies:
        raise PassError(f"k loop %{kloop.iv} has no leading copy nests")
    if any(is_copy_root(n) for n in compute):
        raise PassError(f"k loop %{kloop.iv} interleaves copies with compute")
    if yield_op is None:
        yield_op = Op(OpKind.YIELD)
    return copies, compute, yield_op


def _pipeline(kloop: Loop, gen: NameGen):
    copies, compute, yield_op = _split_k(kloop)
    k, step = kloop.iv, kloop.step
    lb, ub = kloop.lower, kloop.upper
    last = ub - AffineExpr.constant(step)
    prologue = fresh_copy(substitute_nodes(copies, {k: lb}), gen)
    ahead = fresh_copy(substitute_nodes(copies, {k: AffineExpr.dim(k) + step}), gen)
    main_results = tuple(gen() for _ in kloop.results)
    main = replace(
        kloop,
        upper=last,
        body=tuple(compute) + tuple(ahead) + ((yield_op,) if kloop.iter_args else ()),
        results=main_results,
    ).with_attrs(**{PIPELINED: True})
    epi = substitute_nodes(tuple(compute) + (yield_op,), {k: last})
    epi = fresh_copy(epi, gen, dict(zip(kloop.region_args, main_results)))
    final = dict(zip(kloop.results, epi[-1].operands))
    return list(prologue) + [main] + list(epi[:-1]), final


def split_pipeline_with_note(m: Module):
    gen = NameGen("p")
    notes = []

    def block(nodes):
        out, rename = [], {}
        for n in nodes:
            if rename:
                (n,) = rename_values((n,), rename)
            if isinstance(n, Loop) and n.tag == "k" and not n.attr(PIPELINED):
                if n.trip_count is None or n.trip_count < 2:
                    notes.append(f"k loop trip count {n.trip_count} < 2, not pipelined")
                    out.append(n)
                    continue
                new, final = _pipeline(n, gen)
                out.extend(new)
                rename.update(final)
            elif isinstance(n, Loop):
                out.append(replace(n, body=block(n.body)))
            else:
                out.append(n)
        return tuple(out)

    new = block(m.func.body)
    out = m.with_body(new)
    if out == m:
        return m, "; ".join(notes) or "no k loop to pipeline"
    return finish(out), "; ".join(notes) or None


def split_pipeline(m: Module) -> Module:
    return split_pipeline_with_note(m)[0]


# --------------------------------------------------------------------------
# barriers

_BARRIER = Op(OpKind.BARRIER)


def _runs(nodes):
    """(start, end) index pairs of maximal runs of consecutive copy nests."""
    out, i = [], 0
    while i < len(nodes):
        if is_copy_root(nodes[i]):
            j = i
            while j < len(nodes) and is_copy_root(nodes[j]):
                j += 1
            out.append((i, j))
            i = j
        else:
            i += 1
    return out


def _ends_body(nodes, end) -> bool:
    rest = nodes[end:]
    return all(isinstance(n, Op) and n.kind is OpKind.YIELD for n in rest)


def _barrier_block(nodes, wrap_top: bool):
    """Insert barriers around copy runs.  Returns (block, needs barrier after owning loop)."""
    nodes = list(nodes)
    need_after_loop = False
    if wrap_top and nodes and not is_barrier(nodes[0]):
        nodes.insert(0, _BARRIER)
    for start, end in reversed(_runs(nodes)):
        if _ends_body(nodes, end):
            need_after_loop = True
        elif not is_barrier(nodes[end]):
            nodes.insert(end, _BARRIER)
        if start == 0 or not is_barrier(nodes[start - 1]):
            nodes.insert(start, _BARRIER)
    return nodes, need_after_loop


def _barriers(nodes, top_barrier=False):
    out = []
    # first pass: recurse and note which loops need a barrier after them
    needs = []
    for n in nodes:
        if isinstance(n, Loop) and not is_copy_root(n):
            inner = [x for x in n.body]
            runs = _runs(inner)
            trailing = any(_ends_body(inner, e) for _, e in runs)
            body = _barriers(n.body, top_barrier=trailing)
            out.append(replace(n, body=tuple(body)))
            needs.append(trailing)
        else:
            out.append(n)
            needs.append(False)
    block, _ = _barrier_block(out, wrap_top=top_barrier)
    # barrier directly after each loop whose body ends with a copy run
    final = []
    flagged = {id(n) for n, need in zip(out, needs) if need}
    for pos, n in enumerate(block):
        final.append(n)
        if id(n) in flagged:
            nxt = block[pos + 1] if pos + 1 < len(block) else None
            if not is_barrier(nxt):
                final.append(_BARRIER)
    return final


def insert_barriers(m: Module) -> Module:
    """Synchronize around every run of shared-memory copy nests."""
    new = tuple(_barriers(m.func.body))
    out = m.with_body(new)
    return finish(out) if out != m else m
