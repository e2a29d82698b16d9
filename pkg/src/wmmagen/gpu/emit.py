"""Pseudo-CUDA rendering of a mapped kernel, for reading and golden tests.

The text follows CUDA syntax closely (``__shared__`` arrays with their padded
extents, ``wmma::fragment`` declarations, ``__syncthreads()``) but is not meant
to compile: loop-carried fragments are plain assignments and vector copies use
``uint``/``uint2``/``uint4`` reinterpretation.
"""

from __future__ import annotations

from ..ir.nodes import Loop, Op, OpKind, walk
from ..ir.types import ElemType, FragmentRole, FragmentType, MemorySpace, VectorType
from .kernel import GpuKernel

_CTYPE = {ElemType.F16: "half", ElemType.F32: "float"}
_VEC = {4: "uint", 8: "uint2", 16: "uint4"}
_ROLE = {FragmentRole.MAT_A: "wmma::matrix_a", FragmentRole.MAT_B: "wmma::matrix_b",
         FragmentRole.ACCUM: "wmma::accumulator"}


def _expr(e) -> str:
    text = e.to_str(prefix="")
    return text.replace(" floordiv ", " / ").replace(" mod ", " % ")


def _var(name: str, types: dict) -> str:
    t = types.get(name)
    if isinstance(t, FragmentType):
        return f"f{name}"
    return f"v{name}"


class _Emitter:
    def __init__(self, k: GpuKernel):
        self.k = k
        self.m = k.module
        self.f = k.module.func
        self.lines = []
        self.types = {}
        for n, _ in walk(self.f.body):
            if isinstance(n, Op):
                for r in n.results:
                    self.types[r] = n.type
            else:
                for (a, init), r in zip(n.iter_args, n.results):
                    self.types[a] = self.types.get(init)
                    self.types[r] = self.types.get(init)

    def emit(self, depth, text):
        self.lines.append("  " * depth + text)

    def ref(self, op: Op) -> str:
        idx = "".join(f"[{_expr(e)}]" for e in op.indices)
        return f"{op.buffer}{idx}"

    def v(self, name) -> str:
        return _var(name, self.types)

    def op(self, op: Op, depth):
        k = op.kind
        if k is OpKind.BARRIER:
            self.emit(depth, "__syncthreads();")
        elif k is OpKind.WMMA_LOAD:
            layout = ", wmma::mem_row_major" if op.type.role is FragmentRole.ACCUM else ""
            self.emit(depth, f"wmma::load_matrix_sync({self.v(op.results[0])}, &{self.ref(op)}, "
                             f"{op.attr('ld')}{layout});")
        elif k is OpKind.WMMA_STORE:
            self.emit(depth, f"wmma::store_matrix_sync(&{self.ref(op)}, {self.v(op.operands[0])}, "
                             f"{op.attr('ld')}, wmma::mem_row_major);")
        elif k is OpKind.WMMA_COMPUTE:
            d = self.v(op.results[0])
            a, b, c = (self.v(x) for x in op.operands)
            self.emit(depth, f"wmma::mma_sync({d}, {a}, {b}, {c});")
        elif k is OpKind.VECTOR_LOAD:
            vt = _VEC[op.type.width * op.type.elem.nbytes]
            self.emit(depth, f"{vt} {self.v(op.results[0])} = *(const {vt} *)&{self.ref(op)};")
        elif k is OpKind.VECTOR_STORE:
            t = self.types.get(op.operands[0])
            vt = _VEC[t.width * t.elem.nbytes] if isinstance(t, VectorType) else "uint4"
            self.emit(depth, f"*({vt} *)&{self.ref(op)} = {self.v(op.operands[0])};")
        elif k is OpKind.LOAD:
            self.emit(depth, f"{_CTYPE[op.type]} {self.v(op.results[0])} = {self.ref(op)};")
        elif k is OpKind.STORE:
            self.emit(depth, f"{self.ref(op)} = {self.v(op.operands[0])};")
        elif k is OpKind.CONSTANT:
            self.emit(depth, f"{_CTYPE[op.type]} {self.v(op.results[0])} = {op.attr('value')!r};")
        elif k is OpKind.EXTF:
            self.emit(depth, f"float {self.v(op.results[0])} = __half2float({self.v(op.operands[0])});")
        elif k in (OpKind.MULF, OpKind.ADDF):
            sym = "*" if k is OpKind.MULF else "+"
            a, b = (self.v(x) for x in op.operands)
            self.emit(depth, f"{_CTYPE[op.type]} {self.v(op.results[0])} = {a} {sym} {b};")
        elif k is OpKind.YIELD:
            pass

    def loop(self, lp: Loop, depth):
        for a, init in lp.iter_args:
            self.emit(depth, f"{self.v(a)} = {self.v(init)};")
        iv = lp.iv
        note = f"  // {lp.tag}" if lp.tag else ""
        self.emit(depth, f"for (int {iv} = {_expr(lp.lower)}; {iv} < {_expr(lp.upper)}; {iv} += {lp.step}) {{{note}")
        self.nodes(lp.body, depth + 1)
        body = lp.body
        if lp.iter_args and body and isinstance(body[-1], Op) and body[-1].kind is OpKind.YIELD:
            for a, v in zip(lp.region_args, body[-1].operands):
                self.emit(depth + 1, f"{self.v(a)} = {self.v(v)};")
        self.emit(depth, "}")
        for r, a in zip(lp.results, lp.region_args):
            self.emit(depth, f"{self.v(r)} = {self.v(a)};")

    def nodes(self, nodes, depth):
        for n in nodes:
            if isinstance(n, Loop):
                self.loop(n, depth)
            else:
                self.op(n, depth)

    def fragment_decls(self, depth):
        frags = {}
        for name, t in self.types.items():
            if isinstance(t, FragmentType):
                frags.setdefault(t, []).append(name)
        for t in sorted(frags, key=lambda t: (t.role.value, t.elem.value)):
            names = sorted(frags[t], key=lambda s: (len(s), s))
            layout = ", wmma::row_major" if t.role is not FragmentRole.ACCUM else ""
            decl = f"wmma::fragment<{_ROLE[t.role]}, {t.m}, {t.n}, {t.k}, {_CTYPE[t.elem]}{layout}>"
            self.emit(depth, f"{decl} " + ", ".join(self.v(n) for n in names) + ";")

    def run(self) -> str:
        L = self.k.launch
        params = []
        for name, t in self.f.args:
            params.append(f"{_CTYPE[t.elem]} *{name} /* {'x'.join(map(str, t.shape))} */")
        self.emit(0, f"// launch: grid({L.grid_x}, {L.grid_y}) block({L.block_threads}) "
                     f"warps({L.warps_x}, {L.warps_y})")
        self.emit(0, f"__global__ void {self.f.name}({', '.join(params)}) {{")
        for g in self.m.globals:
            if g.type.space == MemorySpace.SHARED:
                dims = "".join(f"[{d}]" for d in g.type.alloc_shape)
                self.emit(1, f"__shared__ {_CTYPE[g.type.elem]} {g.name}{dims};")
        if self.f.body:
            self.emit(1, "const int bx = blockIdx.x, by = blockIdx.y;")
            self.emit(1, "const int wid = threadIdx.x / 32, lane = threadIdx.x % 32;")
        self.fragment_decls(1)
        self.nodes(self.f.body, 1)
        self.emit(0, "}")
        return "\n".join(self.lines) + "\n"


def emit_kernel_text(k: GpuKernel) -> str:
    return _Emitter(k).run()
