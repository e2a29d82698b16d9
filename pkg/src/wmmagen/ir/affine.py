"""Quasi-affine index expressions and maps.

Expressions are kept in a normalized sum-of-terms form: an integer constant
plus a sorted tuple of ``(atom, coefficient)`` pairs.  An atom is a named
dimension, a named symbol, or a ``floordiv``/``mod`` of a sub-expression by a
positive constant.  Because the form is canonical, structural equality of two
expressions coincides with syntactic equality after simplification, which is
what CSE and the round-trip tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

Number = int


@dataclass(frozen=True)
class Dim:
    name: str

    def key(self):
        return (0, self.name)


@dataclass(frozen=True)
class Sym:
    name: str

    def key(self):
        return (1, self.name)


@dataclass(frozen=True)
class FloorDiv:
    expr: "AffineExpr"
    divisor: int

    def key(self):
        return (2, self.expr.sort_key(), self.divisor)


@dataclass(frozen=True)
class Mod:
    expr: "AffineExpr"
    divisor: int

    def key(self):
        return (3, self.expr.sort_key(), self.divisor)


Atom = Union[Dim, Sym, FloorDiv, Mod]


def _combine(pairs) -> tuple:
    acc: dict = {}
    order: dict = {}
    for atom, coeff in pairs:
        if atom in acc:
            acc[atom] += coeff
        else:
            acc[atom] = coeff
            order[atom] = atom.key()
    items = [(a, c) for a, c in acc.items() if c != 0]
    items.sort(key=lambda p: order[p[0]])
    return tuple(items)


@dataclass(frozen=True)
class AffineExpr:
    terms: tuple = ()
    const: int = 0

    # construction -----------------------------------------------------------
    @staticmethod
    def constant(value: int) -> "AffineExpr":
        return AffineExpr((), int(value))

    @staticmethod
    def dim(name: str) -> "AffineExpr":
        return AffineExpr(((Dim(name), 1),), 0)

    @staticmethod
    def sym(name: str) -> "AffineExpr":
        return AffineExpr(((Sym(name), 1),), 0)

    @staticmethod
    def lift(value: "AffineExpr | int") -> "AffineExpr":
        if isinstance(value, AffineExpr):
            return value
        if isinstance(value, int):
            return AffineExpr.constant(value)
        raise TypeError(f"cannot build an affine expression from {value!r}")

    def sort_key(self):
        return (tuple((a.key(), c) for a, c in self.terms), self.const)

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        other = AffineExpr.lift(other)
        return AffineExpr(_combine(self.terms + other.terms), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-AffineExpr.lift(other))

    def __rsub__(self, other):
        return AffineExpr.lift(other) - self

    def __mul__(self, other):
        if isinstance(other, AffineExpr):
            if other.is_constant:
                other = other.const
            elif self.is_constant:
                return other * self.const
            else:
                raise ValueError("product of two non-constant affine expressions")
        if not isinstance(other, int):
            raise TypeError(f"cannot multiply affine expression by {other!r}")
        if other == 0:
            return AffineExpr.constant(0)
        return AffineExpr(tuple((a, c * other) for a, c in self.terms), self.const * other)

    __rmul__ = __mul__

    def floordiv(self, divisor: int) -> "AffineExpr":
        if divisor <= 0:
            raise ValueError("floordiv requires a positive constant divisor")
        if divisor == 1:
            return self
        if self.is_constant:
            return AffineExpr.constant(self.const // divisor)
        if all(c % divisor == 0 for _, c in self.terms) and self.const % divisor == 0:
            return AffineExpr(tuple((a, c // divisor) for a, c in self.terms), self.const // divisor)
        return AffineExpr(((FloorDiv(self, divisor), 1),), 0)

    def mod(self, divisor: int) -> "AffineExpr":
        if divisor <= 0:
            raise ValueError("mod requires a positive constant divisor")
        if divisor == 1:
            return AffineExpr.constant(0)
        if all(c % divisor == 0 for _, c in self.terms):
            return AffineExpr.constant(self.const % divisor)
        return AffineExpr(((Mod(self, divisor), 1),), 0)

    # queries ----------------------------------------------------------------
    @property
    def is_constant(self) -> bool:
        return not self.terms

    def coeff(self, name: str) -> int:
        """Top-level coefficient of dimension ``name`` (0 if absent)."""
        for atom, c in self.terms:
            if isinstance(atom, Dim) and atom.name == name:
                return c
        return 0

    def dims(self) -> frozenset:
        out = set()
        for atom, _ in self.terms:
            if isinstance(atom, Dim):
                out.add(atom.name)
            elif isinstance(atom, (FloorDiv, Mod)):
                out |= atom.expr.dims()
        return frozenset(out)

    def symbols(self) -> frozenset:
        out = set()
        for atom, _ in self.terms:
            if isinstance(atom, Sym):
                out.add(atom.name)
            elif isinstance(atom, (FloorDiv, Mod)):
                out |= atom.expr.symbols()
        return frozenset(out)

    @property
    def is_linear(self) -> bool:
        return all(isinstance(a, (Dim, Sym)) for a, _ in self.terms)

    def substitute(self, mapping: Mapping[str, "AffineExpr | int"]) -> "AffineExpr":
        if not mapping:
            return self
        out = AffineExpr.constant(self.const)
        for atom, c in self.terms:
            if isinstance(atom, (Dim, Sym)):
                repl = mapping.get(atom.name)
                part = AffineExpr(((atom, 1),), 0) if repl is None else AffineExpr.lift(repl)
            elif isinstance(atom, FloorDiv):
                part = atom.expr.substitute(mapping).floordiv(atom.divisor)
            else:
                part = atom.expr.substitute(mapping).mod(atom.divisor)
            out = out + part * c
        return out

    # evaluation -------------------------------------------------------------
    @cached_property
    def _fn(self):
        src = self._pysrc()
        return eval(f"lambda env: {src}", {})  # noqa: S307 - generated from our own AST

    def _pysrc(self) -> str:
        parts = [str(self.const)]
        for atom, c in self.terms:
            if isinstance(atom, (Dim, Sym)):
                base = f"env[{atom.name!r}]"
            elif isinstance(atom, FloorDiv):
                base = f"(({atom.expr._pysrc()}) // {atom.divisor})"
            else:
                base = f"(({atom.expr._pysrc()}) % {atom.divisor})"
            parts.append(base if c == 1 else f"{c} * {base}")
        return " + ".join(parts)

    def evaluate(self, env: Mapping):
        """Evaluate with ``env`` mapping names to ints or integer numpy arrays."""
        return self._fn(env)

    # printing ---------------------------------------------------------------
    def to_str(self, prefix: str = "%") -> str:
        pieces = []
        for atom, c in self.terms:
            if isinstance(atom, (Dim, Sym)):
                base = f"{prefix}{atom.name}"
            elif isinstance(atom, FloorDiv):
                base = f"({atom.expr._operand_str(prefix)} floordiv {atom.divisor})"
            else:
                base = f"({atom.expr._operand_str(prefix)} mod {atom.divisor})"
            mag = abs(c)
            text = base if mag == 1 else f"{base} * {mag}"
            if not pieces:
                pieces.append(text if c > 0 else f"-{text}")
            else:
                pieces.append(f"+ {text}" if c > 0 else f"- {text}")
        if not pieces:
            return str(self.const)
        if self.const > 0:
            pieces.append(f"+ {self.const}")
        elif self.const < 0:
            pieces.append(f"- {-self.const}")
        return " ".join(pieces)

    def _operand_str(self, prefix: str) -> str:
        text = self.to_str(prefix)
        simple = self.const == 0 and len(self.terms) == 1 and self.terms[0][1] == 1
        return text if simple else f"({text})"

    def __str__(self):
        return self.to_str()

    def __repr__(self):
        return f"AffineExpr({self.to_str()})"


def const(value: int) -> AffineExpr:
    return AffineExpr.constant(value)


def dim(name: str) -> AffineExpr:
    return AffineExpr.dim(name)


@dataclass(frozen=True)
class AffineMap:
    """A map ``(d0, ..., dn-1)[s0, ...] -> (results...)`` with positional names."""

    num_dims: int
    num_symbols: int
    results: tuple

    def __post_init__(self):
        allowed_d = {f"d{i}" for i in range(self.num_dims)}
        allowed_s = {f"s{i}" for i in range(self.num_symbols)}
        for r in self.results:
            if not r.dims() <= allowed_d or not r.symbols() <= allowed_s:
                raise ValueError(f"affine map result {r.to_str('')} references undeclared dims/symbols")

    @staticmethod
    def strided(strides, offset: int = 0) -> "AffineMap":
        expr = AffineExpr.constant(offset)
        for i, s in enumerate(strides):
            expr = expr + AffineExpr.dim(f"d{i}") * s
        return AffineMap(len(strides), 0, (expr,))

    @staticmethod
    def identity(rank: int) -> "AffineMap":
        return AffineMap(rank, 0, tuple(AffineExpr.dim(f"d{i}") for i in range(rank)))

    def apply(self, dims, symbols=()):
        env = {f"d{i}": v for i, v in enumerate(dims)}
        env.update({f"s{i}": v for i, v in enumerate(symbols)})
        return tuple(r.evaluate(env) for r in self.results)

    def compose_exprs(self, exprs, symbols=()) -> tuple:
        """Substitute affine expressions for the map's dims and symbols."""
        mapping = {f"d{i}": e for i, e in enumerate(exprs)}
        mapping.update({f"s{i}": e for i, e in enumerate(symbols)})
        return tuple(r.substitute(mapping) for r in self.results)

    def __str__(self):
        ds = ", ".join(f"d{i}" for i in range(self.num_dims))
        ss = ", ".join(f"s{i}" for i in range(self.num_symbols))
        head = f"({ds})" + (f"[{ss}]" if ss else "")
        return f"{head} -> ({', '.join(r.to_str('') for r in self.results)})"


def index_map(indices) -> tuple:
    """Express a list of named-dim index expressions as ``(AffineMap, operands)``.

    Operands are the referenced names in sorted order; they become ``d0..dn-1``.
    """
    names = sorted(set().union(*[e.dims() for e in indices])) if indices else []
    mapping = {n: AffineExpr.dim(f"d{i}") for i, n in enumerate(names)}
    results = tuple(e.substitute(mapping) for e in indices)
    return AffineMap(len(names), 0, results), tuple(names)
