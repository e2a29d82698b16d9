"""Mark dependence-free loops parallel, plus an exhaustive reference check."""

from __future__ import annotations

from dataclasses import replace

from ..ir.nodes import Loop, Module, Op, OpKind, walk
from ..ir.types import MemorySpace
from .dependence import RULE_PRIVATIZE, is_parallel
from .util import finish


def parallelize(m: Module) -> Module:
    f = m.func

    def rec(nodes):
        out = []
        for n in nodes:
            if isinstance(n, Loop):
                par = is_parallel(n, m, f, RULE_PRIVATIZE)
                n = replace(n, body=rec(n.body)).with_attrs(parallel=par or None)
            out.append(n)
        return tuple(out)

    out = m.with_body(rec(f.body))
    return finish(out) if out != m else m


# --------------------------------------------------------------------------
# exhaustive oracle


def _access_addresses(op: Op, env: dict, mt, width: int):
    idx = [int(e.evaluate(env)) for e in op.indices]
    rows, cols = 1, 1
    if op.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
        rows, cols = 16, 16
    elif op.kind in (OpKind.VECTOR_LOAD, OpKind.VECTOR_STORE):
        cols = width
    strides = mt.strides
    base = sum(i * s for i, s in zip(idx, strides))
    if mt.rank == 1:
        return {base + c for c in range(cols)}
    return {base + r * strides[-2] + c for r in range(rows) for c in range(cols)}


def _iteration_trace(nodes, env, module, func, widths, trace):
    """Append (buffer, address, is_write) for every access executed by ``nodes``."""
    for n in nodes:
        if isinstance(n, Loop):
            lb = int(n.lower.evaluate(env))
            ub = int(n.upper.evaluate(env))
            for v in range(lb, ub, n.step):
                env[n.iv] = v
                _iteration_trace(n.body, env, module, func, widths, trace)
            env.pop(n.iv, None)
        elif n.is_read or n.is_write:
            mt = module.buffer_type(n.buffer, func)
            w = widths.get(n.operands[0] if n.operands else n.results[0], 1)
            for a in _access_addresses(n, env, mt, w):
                trace.append((n.buffer, a, n.is_write))


def brute_force_parallel(loop: Loop, module: Module, outer_envs) -> bool:
    """Scan all pairs of iterations of ``loop`` for conflicting accesses.

    ``outer_envs`` enumerates bindings of the loops enclosing ``loop``.  Shared
    buffers whose every read in an iteration is preceded by a write of the same
    element in that iteration count as private to the iteration.
    """
    if loop.iter_args:
        return False
    func = module.func
    widths = {}
    for n, _ in walk(func.body):
        if isinstance(n, Op) and n.kind is OpKind.VECTOR_LOAD:
            widths[n.results[0]] = n.type.width
    for env in outer_envs:
        env = dict(env)
        lb, ub = int(loop.lower.evaluate(env)), int(loop.upper.evaluate(env))
        per_iter = []
        for v in range(lb, ub, loop.step):
            env[loop.iv] = v
            trace = []
            _iteration_trace(loop.body, env, module, func, widths, trace)
            per_iter.append(trace)
        exposed = set()
        for trace in per_iter:
            seen_w = set()
            for buf, a, w in trace:
                if w:
                    seen_w.add((buf, a))
                elif (buf, a) not in seen_w:
                    exposed.add(buf)
        private = {
            b for b in {b for t in per_iter for b, _, _ in t}
            if b not in exposed and module.buffer_type(b, func).space == MemorySpace.SHARED
        }
        sets = []
        for trace in per_iter:
            reads = {(b, a) for b, a, w in trace if not w and b not in private}
            writes = {(b, a) for b, a, w in trace if w and b not in private}
            sets.append((reads, writes))
        for x, (_, w1) in enumerate(sets):
            for y, (r2, w2) in enumerate(sets):
                if x != y and w1 & (r2 | w2):
                    return False
    return True
