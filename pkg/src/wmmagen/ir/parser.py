"""Recursive-descent parser for the textual IR produced by :mod:`printer`."""

from __future__ import annotations

import re

from .affine import AffineExpr
from .nodes import Func, Global, LaunchConfig, Loop, Module, Op, OpKind
from .types import ElemType, FragmentRole, FragmentType, MemorySpace, MemRefType, VectorType


class IRSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class IRVerifyError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


_NAME = r"[A-Za-z0-9_.]+"
_WS = re.compile(r"(?:\s+|//[^\n]*)*")
_VALUE = re.compile(r"%(" + _NAME + ")")
_GLOBAL = re.compile(r"@(" + _NAME + ")")
_INT = re.compile(r"-?\d+")
_FLOAT = re.compile(r"-?(?:\d+\.\d*(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|inf|nan)")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_MEMREF = re.compile(r"memref<((?:\d+x)+)(f16|f32)(?:,\s*(\d+))?>")
_VECTOR = re.compile(r"vector<(\d+)x(f16|f32)>")
_FRAG = re.compile(r"!wmma<\s*([abc])\s*,\s*(\d+)x(\d+)x(\d+)\s*,\s*(f16|f32)\s*>")
_STRING = re.compile(r'"([^"]*)"')

_MNEMONICS = {k.value: k for k in OpKind}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    # low level -------------------------------------------------------------
    def where(self, pos=None):
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, msg, pos=None):
        line, col = self.where(pos)
        return IRSyntaxError(msg, line, col)

    def ws(self):
        self.pos = _WS.match(self.text, self.pos).end()

    def peek(self, s: str) -> bool:
        self.ws()
        if not self.text.startswith(s, self.pos):
            return False
        # keywords must not run into identifier characters
        end = self.pos + len(s)
        if s[-1].isalnum() and end < len(self.text) and (self.text[end].isalnum() or self.text[end] == "_"):
            return False
        return True

    def accept(self, s: str) -> bool:
        if self.peek(s):
            self.pos += len(s)
            return True
        return False

    def expect(self, s: str):
        if not self.accept(s):
            found = self.text[self.pos:self.pos + 12].split("\n")[0]
            raise self.error(f"expected {s!r}, found {found!r}")

    def regex(self, pattern: re.Pattern, what: str):
        self.ws()
        m = pattern.match(self.text, self.pos)
        if not m:
            found = self.text[self.pos:self.pos + 12].split("\n")[0]
            raise self.error(f"expected {what}, found {found!r}")
        self.pos = m.end()
        return m

    def value(self) -> str:
        return self.regex(_VALUE, "value name").group(1)

    def integer(self) -> int:
        return int(self.regex(_INT, "integer").group(0))

    # types -----------------------------------------------------------------
    def memref(self) -> tuple:
        m = self.regex(_MEMREF, "memref type")
        dims = tuple(int(d) for d in m.group(1).rstrip("x").split("x"))
        space = MemorySpace(int(m.group(3))) if m.group(3) else MemorySpace.GLOBAL
        return dims, ElemType.parse(m.group(2)), space

    def value_type(self):
        self.ws()
        for pat, build in (
            (_FRAG, lambda m: FragmentType(FragmentRole(m.group(1)), ElemType.parse(m.group(5)),
                                           int(m.group(2)), int(m.group(3)), int(m.group(4)))),
            (_VECTOR, lambda m: VectorType(int(m.group(1)), ElemType.parse(m.group(2)))),
        ):
            m = pat.match(self.text, self.pos)
            if m:
                self.pos = m.end()
                return build(m)
        m = self.regex(_IDENT, "type")
        try:
            return ElemType.parse(m.group(0))
        except ValueError:
            raise self.error(f"unknown type {m.group(0)!r}", m.start()) from None

    # expressions -----------------------------------------------------------
    def expr(self) -> AffineExpr:
        e = self.term()
        while True:
            if self.accept("+"):
                e = e + self.term()
            elif self.peek("-") and not self.text.startswith("->", self.pos):
                self.pos += 1
                e = e - self.term()
            else:
                return e

    def term(self) -> AffineExpr:
        start = self.pos
        e = self.unary()
        while True:
            if self.accept("*"):
                rhs = self.unary()
                try:
                    e = e * rhs
                except ValueError as exc:
                    raise self.error(str(exc), start) from None
            elif self.accept("floordiv"):
                e = e.floordiv(self.integer())
            elif self.accept("mod"):
                e = e.mod(self.integer())
            else:
                return e

    def unary(self) -> AffineExpr:
        if self.accept("-"):
            return -self.unary()
        return self.primary()

    def primary(self) -> AffineExpr:
        self.ws()
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        m = _VALUE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return AffineExpr.dim(m.group(1))
        return AffineExpr.constant(self.integer())

    # attributes ------------------------------------------------------------
    def attr_dict(self) -> dict:
        out = {}
        self.expect("{")
        if self.accept("}"):
            return out
        while True:
            key = self.regex(_IDENT, "attribute name").group(0)
            if self.accept("="):
                out[key] = self.attr_value()
            else:
                out[key] = True
            if self.accept("}"):
                return out
            self.expect(",")

    def attr_value(self):
        self.ws()
        m = _STRING.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return m.group(1)
        m = _FLOAT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return float(m.group(0))
        if self.accept("true"):
            return True
        return self.integer()

    # structure -------------------------------------------------------------
    def buffer_ref(self) -> str:
        self.ws()
        m = _GLOBAL.match(self.text, self.pos) or _VALUE.match(self.text, self.pos)
        if not m:
            raise self.error("expected buffer reference")
        self.pos = m.end()
        return m.group(1)

    def access(self):
        buf = self.buffer_ref()
        self.expect("[")
        idx = []
        if not self.accept("]"):
            while True:
                idx.append(self.expr())
                if self.accept("]"):
                    break
                self.expect(",")
        attrs = self.attr_dict() if self.peek("{") else {}
        return buf, tuple(idx), attrs

    def value_list(self) -> list:
        vals = [self.value()]
        while self.accept(","):
            vals.append(self.value())
        return vals

    def block(self) -> tuple:
        nodes = []
        while not self.accept("}"):
            if self.pos >= len(self.text):
                raise self.error("unexpected end of input; missing '}'")
            nodes.append(self.statement())
        return tuple(nodes)

    def statement(self):
        self.ws()
        results = []
        if self.text.startswith("%", self.pos):
            results = self.value_list()
            self.expect("=")
        if self.peek("for"):
            return self.loop(results)
        start = self.pos
        m = self.regex(re.compile(r"[a-z][a-z.]*"), "operation")
        kind = _MNEMONICS.get(m.group(0))
        if kind is None:
            raise self.error(f"unknown operation {m.group(0)!r}", start)
        return self.op(kind, results, start)

    def op(self, kind: OpKind, results, start) -> Op:
        k = OpKind
        if kind is k.CONSTANT:
            val = self.attr_value()
            self.expect(":")
            return Op(kind, results, (), type=self.value_type(), attrs={"value": float(val)})
        if kind in (k.LOAD, k.VECTOR_LOAD, k.WMMA_LOAD):
            buf, idx, attrs = self.access()
            self.expect(":")
            return Op(kind, results, (), buf, idx, self.value_type(), attrs)
        if kind in (k.STORE, k.VECTOR_STORE, k.WMMA_STORE):
            val = self.value()
            self.expect(",")
            buf, idx, attrs = self.access()
            return Op(kind, results, (val,), buf, idx, None, attrs)
        if kind in (k.MULF, k.ADDF, k.EXTF, k.WMMA_COMPUTE):
            operands = self.value_list()
            self.expect(":")
            return Op(kind, results, operands, type=self.value_type())
        if kind is k.BARRIER:
            return Op(kind, results)
        if kind is k.YIELD:
            self.ws()
            operands = self.value_list() if self.text.startswith("%", self.pos) else []
            return Op(kind, results, operands)
        raise self.error(f"unsupported operation {kind.value}", start)  # pragma: no cover

    def loop(self, results) -> Loop:
        self.expect("for")
        iv = self.value()
        self.expect("=")
        lower = self.expr()
        self.expect("to")
        upper = self.expr()
        self.expect("step")
        step = self.integer()
        iter_args = []
        if self.accept("iter_args"):
            self.expect("(")
            while True:
                a = self.value()
                self.expect("=")
                iter_args.append((a, self.value()))
                if self.accept(")"):
                    break
                self.expect(",")
        attrs = {}
        if self.accept("attrs"):
            attrs = self.attr_dict()
        self.expect("{")
        body = self.block()
        return Loop(iv, lower, upper, step, body, tuple(iter_args), tuple(results), attrs)

    def func(self) -> Func:
        self.expect("func")
        name = self.regex(_GLOBAL, "function name").group(1)
        self.expect("(")
        args = []
        if not self.accept(")"):
            while True:
                a = self.value()
                self.expect(":")
                dims, elem, space = self.memref()
                args.append((a, MemRefType.row_major(dims, elem, space)))
                if self.accept(")"):
                    break
                self.expect(",")
        launch = None
        if self.accept("launch"):
            self.expect("grid")
            self.expect("(")
            gx = self.integer()
            self.expect(",")
            gy = self.integer()
            self.expect(")")
            self.expect("warps")
            self.expect("(")
            wx = self.integer()
            self.expect(",")
            wy = self.integer()
            self.expect(")")
            launch = LaunchConfig(gx, gy, wx, wy)
        self.expect("{")
        return Func(name, tuple(args), self.block(), launch)

    def glob(self) -> Global:
        self.expect("global")
        name = self.regex(_GLOBAL, "global name").group(1)
        self.expect(":")
        alloc, elem, space = self.memref()
        shape = alloc
        if self.accept("view"):
            m = self.regex(re.compile(r"(\d+(?:x\d+)*)"), "view shape")
            shape = tuple(int(d) for d in m.group(1).split("x"))
        try:
            t = MemRefType.row_major(shape, elem, space, alloc)
        except ValueError as exc:
            raise self.error(str(exc)) from None
        return Global(name, t)

    def module(self) -> Module:
        self.expect("module")
        self.expect("{")
        globs, funcs = [], []
        while not self.accept("}"):
            if self.peek("global"):
                globs.append(self.glob())
            elif self.peek("func"):
                funcs.append(self.func())
            else:
                raise self.error("expected 'global', 'func' or '}'")
        self.ws()
        if self.pos != len(self.text):
            raise self.error("trailing text after module")
        return Module(tuple(globs), tuple(funcs))


def parse_ir(text: str, verify_result: bool = True) -> Module:
    """Parse module text; raise :class:`IRSyntaxError` or :class:`IRVerifyError`."""
    module = _Parser(text).module()
    if verify_result:
        from .verifier import verify

        diags = verify(module)
        if diags:
            raise IRVerifyError(diags)
    return module


def parse_affine(text: str) -> AffineExpr:
    """Parse a single affine expression such as ``%i * 64 + (%k floordiv 8)``."""
    p = _Parser(text)
    e = p.expr()
    p.ws()
    if p.pos != len(text):
        raise p.error("trailing text after expression")
    return e
