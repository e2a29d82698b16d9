"""Deterministic textual form of modules.

Grammar sketch (one construct per line, two-space indentation)::

    module {
      global @a_smem : memref<128x72xf16, 3> view 128x64
      func @matmul(%A: memref<64x64xf16>, ...) [launch grid(G, G) warps(W, W)] {
        %r0 = for %k = 0 to 64 step 16 iter_args(%a0 = %x) attrs {tag = "k"} {
          %0 = load %A[%i, %k] : f16
          store %0, @a_smem[%i - %ii, %k]
          %1 = wmma.load @a_smem[...] {ld = 72} : !wmma<a, 16x16x16, f16>
          barrier
          yield %1
        }
      }
    }
"""

from __future__ import annotations

from .nodes import Func, Loop, Module, Op, OpKind


def _attr_text(attrs) -> str:
    parts = []
    for k, v in attrs:
        if v is True:
            parts.append(k)
        elif isinstance(v, str):
            parts.append(f'{k} = "{v}"')
        else:
            parts.append(f"{k} = {v}")
    return "{" + ", ".join(parts) + "}"


def _vals(names) -> str:
    return ", ".join(f"%{n}" for n in names)


class _Printer:
    def __init__(self, module: Module):
        self.module = module
        self.global_names = {g.name for g in module.globals}
        self.lines: list = []

    def buf(self, name: str) -> str:
        return f"@{name}" if name in self.global_names else f"%{name}"

    def emit(self, depth: int, text: str):
        self.lines.append("  " * depth + text)

    def access(self, op: Op) -> str:
        idx = ", ".join(e.to_str() for e in op.indices)
        text = f"{self.buf(op.buffer)}[{idx}]"
        if op.attrs:
            text += " " + _attr_text(op.attrs)
        return text

    def op(self, op: Op, depth: int):
        k = op.kind
        res = f"{_vals(op.results)} = " if op.results else ""
        if k is OpKind.CONSTANT:
            self.emit(depth, f"{res}const {op.attr('value')!r} : {op.type}")
        elif k in (OpKind.LOAD, OpKind.VECTOR_LOAD, OpKind.WMMA_LOAD):
            self.emit(depth, f"{res}{k.value} {self.access(op)} : {op.type}")
        elif k in (OpKind.STORE, OpKind.VECTOR_STORE, OpKind.WMMA_STORE):
            self.emit(depth, f"{k.value} {_vals(op.operands)}, {self.access(op)}")
        elif k in (OpKind.MULF, OpKind.ADDF, OpKind.EXTF, OpKind.WMMA_COMPUTE):
            self.emit(depth, f"{res}{k.value} {_vals(op.operands)} : {op.type}")
        elif k is OpKind.BARRIER:
            self.emit(depth, "barrier")
        elif k is OpKind.YIELD:
            self.emit(depth, f"yield {_vals(op.operands)}".rstrip())
        else:  # pragma: no cover
            raise ValueError(f"unprintable op {k}")

    def loop(self, lp: Loop, depth: int):
        head = f"{_vals(lp.results)} = " if lp.results else ""
        head += f"for %{lp.iv} = {lp.lower} to {lp.upper} step {lp.step}"
        if lp.iter_args:
            head += " iter_args(" + ", ".join(f"%{a} = %{v}" for a, v in lp.iter_args) + ")"
        if lp.attrs:
            head += " attrs " + _attr_text(lp.attrs)
        self.emit(depth, head + " {")
        self.nodes(lp.body, depth + 1)
        self.emit(depth, "}")

    def nodes(self, nodes, depth: int):
        for n in nodes:
            if isinstance(n, Loop):
                self.loop(n, depth)
            else:
                self.op(n, depth)

    def func(self, f: Func, depth: int):
        args = ", ".join(f"%{n}: {t}" for n, t in f.args)
        head = f"func @{f.name}({args})"
        if f.launch is not None:
            L = f.launch
            head += f" launch grid({L.grid_x}, {L.grid_y}) warps({L.warps_x}, {L.warps_y})"
        self.emit(depth, head + " {")
        self.nodes(f.body, depth + 1)
        self.emit(depth, "}")

    def run(self) -> str:
        self.emit(0, "module {")
        for g in self.module.globals:
            text = f"global @{g.name} : {g.type}"
            if g.type.is_padded:
                text += " view " + "x".join(str(s) for s in g.type.shape)
            self.emit(1, text)
        for f in self.module.funcs:
            self.func(f, 1)
        self.emit(0, "}")
        return "\n".join(self.lines) + "\n"


def print_ir(module: Module) -> str:
    return _Printer(module).run()
