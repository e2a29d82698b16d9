"""Structural verifier.  Returns diagnostics instead of raising."""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import HW_IDS, Func, Loop, Module, Op, OpKind
from .types import ElemType, FragmentRole, FragmentType, MemRefType, VectorType, WMMA_M


@dataclass(frozen=True)
class Diagnostic:
    location: str
    rule: str
    message: str

    def __str__(self):
        return f"{self.location}: [{self.rule}] {self.message}"


# loops consumed by the block/warp mapping
MAPPED_TAGS = ("i", "j", "ii", "jj")

_ROLES = (FragmentRole.MAT_A, FragmentRole.MAT_B, FragmentRole.ACCUM)


class _Verifier:
    def __init__(self, module: Module):
        self.module = module
        self.diags: list = []

    def report(self, loc, rule, msg):
        self.diags.append(Diagnostic(loc, rule, msg))

    def run(self):
        seen = set()
        for g in self.module.globals:
            if g.name in seen:
                self.report(f"global @{g.name}", "unique-globals", "duplicate global name")
            seen.add(g.name)
            self.check_memref(f"global @{g.name}", g.type)
        for f in self.module.funcs:
            self.func(f)
        return self.diags

    def check_memref(self, loc, t: MemRefType):
        if t.layout.num_dims != t.rank:
            self.report(loc, "layout-arity", "layout arity differs from rank")
        prod = 1
        for s in t.shape:
            prod *= s
        if t.footprint < prod:
            self.report(loc, "footprint", "layout footprint smaller than logical shape")

    def func(self, f: Func):
        loc = f"func @{f.name}"
        names = [n for n, _ in f.args]
        if len(set(names)) != len(names):
            self.report(loc, "unique-args", "duplicate argument name")
        for n, t in f.args:
            if self.module.global_type(n) is not None:
                self.report(loc, "unique-buffers", f"argument %{n} shadows a global")
            self.check_memref(f"{loc} arg %{n}", t)
        self.f = f
        ivs = set(HW_IDS) if f.launch is not None else set()
        self.block(f.body, loc, ivs, {}, owner=None)

    def buffer(self, name) -> MemRefType | None:
        return self.module.buffer_type(name, self.f)

    def define(self, env, name, typ, loc):
        if name in env:
            self.report(loc, "ssa", f"value %{name} defined more than once")
        env[name] = typ

    def block(self, nodes, loc, ivs, env, owner: Loop | None):
        env = dict(env)
        for pos, n in enumerate(nodes):
            if isinstance(n, Loop):
                self.loop(n, f"{loc} / for %{n.iv}", ivs, env)
                for r, (_, init) in zip(n.results, n.iter_args):
                    self.define(env, r, env.get(init), f"{loc} / for %{n.iv}")
            else:
                last = pos == len(nodes) - 1
                self.op(n, f"{loc} / op #{pos} ({n.kind.value})", ivs, env, owner, last)
        return env

    def loop(self, lp: Loop, loc, ivs, env):
        if lp.step <= 0:
            self.report(loc, "step", "loop step must be positive")
        if lp.iv in ivs:
            self.report(loc, "scope", f"induction variable %{lp.iv} shadows an enclosing one")
        for bound in (lp.lower, lp.upper):
            missing = bound.dims() - ivs
            if missing:
                self.report(loc, "dominance", f"bound uses undefined %{sorted(missing)[0]}")
        if lp.trip_count is None:
            self.report(loc, "trip-count", "loop trip count is not a compile-time constant")
        if self.f.launch is not None and lp.tag in MAPPED_TAGS:
            self.report(loc, "gpu-mapping", f"block/warp loop tagged {lp.tag!r} remains inside a launched body")
        if len(lp.results) != len(lp.iter_args):
            self.report(loc, "iter-args", "result count differs from iter_args count")
        inner = dict(env)
        for a, init in lp.iter_args:
            if init not in env:
                self.report(loc, "dominance", f"iter_arg init %{init} used before definition")
            self.define(inner, a, env.get(init), loc)
        if lp.iter_args:
            body = lp.body
            if not body or not isinstance(body[-1], Op) or body[-1].kind is not OpKind.YIELD:
                self.report(loc, "yield", "yield/iter_args mismatch: loop body must end with yield")
        self.block(lp.body, loc, ivs | {lp.iv}, inner, owner=lp)

    def op(self, op: Op, loc, ivs, env, owner: Loop | None, last: bool):
        k = op.kind
        for v in op.operands:
            if v not in env:
                self.report(loc, "dominance", f"%{v} used before definition")
        types = [env.get(v) for v in op.operands]
        expects_result = k not in (OpKind.STORE, OpKind.VECTOR_STORE, OpKind.WMMA_STORE,
                                   OpKind.BARRIER, OpKind.YIELD)
        if expects_result and len(op.results) != 1:
            self.report(loc, "results", "operation must define exactly one value")
        if not expects_result and op.results:
            self.report(loc, "results", "operation defines no values")
        for r in op.results:
            self.define(env, r, op.type, loc)

        if op.buffer is not None or op.is_read or op.is_write:
            self.access(op, loc, ivs)

        mt = self.buffer(op.buffer) if op.buffer is not None else None
        elem = mt.elem if mt is not None else None

        if k is OpKind.LOAD:
            if op.type != elem:
                self.report(loc, "types", "load result type differs from memref element type")
        elif k is OpKind.STORE:
            if types and types[0] is not None and types[0] != elem:
                self.report(loc, "types", "stored value type differs from memref element type")
        elif k is OpKind.VECTOR_LOAD:
            if not isinstance(op.type, VectorType) or op.type.elem != elem:
                self.report(loc, "types", "vload must produce a vector of the memref element type")
        elif k is OpKind.VECTOR_STORE:
            t = types[0] if types else None
            if t is not None and (not isinstance(t, VectorType) or t.elem != elem):
                self.report(loc, "types", "vstore operand must be a vector of the memref element type")
        elif k is OpKind.WMMA_LOAD:
            self.fragment(op.type, loc)
            if isinstance(op.type, FragmentType) and op.type.elem != elem:
                self.report(loc, "types", "fragment element type differs from memref element type")
            self.leading_dim(op, mt, loc)
        elif k is OpKind.WMMA_STORE:
            t = types[0] if types else None
            if t is not None and (not isinstance(t, FragmentType) or t.role is not FragmentRole.ACCUM):
                self.report(loc, "wmma-roles", "wmma.store requires an accumulator fragment")
            elif t is not None and t.elem != elem:
                self.report(loc, "types", "fragment element type differs from memref element type")
            self.leading_dim(op, mt, loc)
        elif k is OpKind.WMMA_COMPUTE:
            self.fragment(op.type, loc)
            if len(types) != 3:
                self.report(loc, "wmma-roles", "wmma.compute takes (MatA, MatB, Accum)")
            else:
                for t, role in zip(types, _ROLES):
                    if t is not None and (not isinstance(t, FragmentType) or t.role is not role):
                        self.report(loc, "wmma-roles",
                                    f"wmma.compute operand expected role {role.value}, got {t}")
                if isinstance(op.type, FragmentType) and (
                        op.type.role is not FragmentRole.ACCUM or op.type != types[2]):
                    self.report(loc, "wmma-roles", "wmma.compute result must match the accumulator operand")
        elif k is OpKind.EXTF:
            if len(types) != 1 or (types[0] is not None and types[0] != ElemType.F16) or op.type != ElemType.F32:
                self.report(loc, "types", "extf converts f16 to f32")
        elif k in (OpKind.MULF, OpKind.ADDF):
            if len(types) != 2:
                self.report(loc, "types", f"{k.value} takes two operands")
            for t in types:
                if isinstance(t, FragmentType):
                    self.report(loc, "fragment-opacity", "fragment values cannot feed scalar arithmetic")
                elif t is not None and t != op.type:
                    self.report(loc, "types", f"{k.value} operand type differs from result type")
        elif k is OpKind.CONSTANT:
            if not isinstance(op.type, ElemType):
                self.report(loc, "types", "constants are scalar")
        elif k is OpKind.BARRIER:
            if op.operands:
                self.report(loc, "barrier", "barrier takes no operands")
        elif k is OpKind.YIELD:
            if owner is None or not last:
                self.report(loc, "yield", "yield must terminate a loop body")
            elif len(op.operands) != len(owner.iter_args):
                self.report(loc, "yield", "yield/iter_args mismatch")
            else:
                for (a, init), t in zip(owner.iter_args, types):
                    if env.get(a) is not None and t is not None and env.get(a) != t:
                        self.report(loc, "yield", "yield/iter_args mismatch: type differs")

    def fragment(self, t, loc):
        if not isinstance(t, FragmentType):
            self.report(loc, "types", "expected a fragment type")
            return
        if (t.m, t.n, t.k) != (WMMA_M, WMMA_M, WMMA_M):
            self.report(loc, "wmma-shape", "only 16x16x16 fragments are supported")
        if t.role in (FragmentRole.MAT_A, FragmentRole.MAT_B) and t.elem is not ElemType.F16:
            self.report(loc, "types", "MatA/MatB fragments hold f16")

    def leading_dim(self, op: Op, mt, loc):
        ld = op.attr("ld")
        if ld is None:
            self.report(loc, "leading-dimension", "wmma memory op needs an ld attribute")
        elif mt is not None and mt.rank == 2 and ld != mt.row_stride:
            self.report(loc, "leading-dimension", f"ld = {ld} but buffer row stride is {mt.row_stride}")

    def access(self, op: Op, loc, ivs):
        mt = self.buffer(op.buffer)
        if mt is None:
            self.report(loc, "buffer", f"unknown buffer {op.buffer!r}")
            return
        if len(op.indices) != mt.rank:
            self.report(loc, "index-arity", f"{len(op.indices)} indices for rank-{mt.rank} memref")
        for e in op.indices:
            missing = e.dims() - ivs
            if missing:
                self.report(loc, "dominance", f"index uses undefined %{sorted(missing)[0]}")
            if e.symbols():
                self.report(loc, "index", "symbols are not allowed in access indices")
            if op.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE) and "lane" in e.dims():
                self.report(loc, "warp-uniform", "WMMA indices must not depend on the lane id")


def verify(module: Module) -> list:
    """Check every structural invariant; an empty list means the module is valid."""
    return _Verifier(module).run()


def trip_counts(module: Module) -> dict:
    """Static trip count of every loop keyed by induction variable (last one wins)."""
    from .nodes import loops_in

    out = {}
    for f in module.funcs:
        for lp in loops_in(f.body):
            out[lp.iv] = lp.trip_count
    return out
