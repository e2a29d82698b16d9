"""Tile configuration, pass errors and pass reports."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir.types import WMMA_K, WMMA_M, WMMA_N

SHARED_LIMIT_BYTES = 48 * 1024
MAX_PADDING = 40
VECTOR_BITS = (32, 64, 128)
SCALAR_COPIES = 0  # vector_bits value that leaves copies scalar


class PassError(ValueError):
    """A pass rejected its input.  ``pass_name`` is filled in by the pass manager."""

    def __init__(self, message: str, pass_name: str | None = None):
        super().__init__(message)
        self.message = message
        self.pass_name = pass_name

    def __str__(self):
        return f"{self.pass_name}: {self.message}" if self.pass_name else self.message


@dataclass(frozen=True)
class TileConfig:
    tbm: int = 128
    tbn: int = 128
    tbk: int = 64
    wm: int = 64
    wn: int = 64
    padding_a: int = 8
    padding_b: int = 8
    vector_bits: int = 128
    wmma_m: int = WMMA_M
    wmma_n: int = WMMA_N
    wmma_k: int = WMMA_K

    @property
    def warps_x(self) -> int:
        return self.tbm // self.wm

    @property
    def warps_y(self) -> int:
        return self.tbn // self.wn

    @property
    def block_threads(self) -> int:
        return self.warps_x * self.warps_y * 32

    def violations(self, problem=None) -> list:
        """Every broken tiling rule, each message naming the offending dimension."""
        out = []
        for name in ("tbm", "tbn", "tbk", "wm", "wn"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive, got {getattr(self, name)}")
        if out:
            return out
        rules = [
            ("tbm", self.tbm, "wm", self.wm),
            ("tbn", self.tbn, "wn", self.wn),
            ("tbk", self.tbk, "wmmaK", self.wmma_k),
            ("wm", self.wm, "wmmaM", self.wmma_m),
            ("wn", self.wn, "wmmaN", self.wmma_n),
        ]
        if problem is not None:
            rules = [
                ("M", problem.M, "tbm", self.tbm),
                ("N", problem.N, "tbn", self.tbn),
                ("K", problem.K, "tbk", self.tbk),
            ] + rules
        for a, av, b, bv in rules:
            if av % bv:
                out.append(f"{a}={av} is not a multiple of {b}={bv}")
        for name in ("padding_a", "padding_b"):
            p = getattr(self, name)
            if p < 0 or p % 8 or p > MAX_PADDING:
                out.append(f"{name}={p} must be a multiple of 8 between 0 and {MAX_PADDING}")
        if self.vector_bits == SCALAR_COPIES:
            pass
        elif self.vector_bits not in VECTOR_BITS:
            out.append(f"vector_bits={self.vector_bits} must be 0 (scalar) or one of {VECTOR_BITS}")
        else:
            w = self.vector_bits // 16
            for name, row in (("tbk", self.tbk), ("tbn", self.tbn)):
                if row % w:
                    out.append(f"copy row {name}={row} is not a multiple of the {self.vector_bits}-bit vector")
        return out

    def check(self, problem=None) -> "TileConfig":
        bad = self.violations(problem)
        if bad:
            raise PassError("; ".join(bad), "config")
        return self


@dataclass
class PassResult:
    module: object
    report: list = field(default_factory=list)  # [(pass name, {delta key: value})]

    def render(self) -> str:
        lines = []
        for name, delta in self.report:
            parts = " ".join(f"{k}={v}" for k, v in sorted(delta.items()))
            lines.append(f"{name}: {parts}".rstrip())
        return "\n".join(lines)
