"""Static resource estimates and legality checks for a tile configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .gpu.kernel import MAX_BLOCK_THREADS, GpuKernel
from .ir.nodes import Module
from .ir.types import ElemType, MemorySpace
from .transforms.config import SHARED_LIMIT_BYTES

MAX_REGISTERS = 255
REGISTER_OVERHEAD = 40
SM_SHARED_BYTES = 100 * 1024
SM_MAX_WARPS = 48
FRAGMENT_ELEMS = 16 * 16


@dataclass(frozen=True)
class ResourceReport:
    shared_bytes: int
    fragments_per_warp: int
    est_registers_per_thread: int
    warps_per_block: int
    est_blocks_per_sm: int
    legality: tuple = field(default_factory=tuple)

    @property
    def legal(self) -> bool:
        return not self.legality

    def render(self) -> str:
        lines = [
            f"shared_bytes={self.shared_bytes}",
            f"fragments_per_warp={self.fragments_per_warp}",
            f"est_registers_per_thread={self.est_registers_per_thread}",
            f"warps_per_block={self.warps_per_block}",
            f"est_blocks_per_sm={self.est_blocks_per_sm}",
            f"violations={len(self.legality)}",
        ]
        lines += [f"violation={v}" for v in self.legality]
        return "\n".join(lines) + "\n"


def projected_shared_bytes(cfg, elem: ElemType = ElemType.F16) -> int:
    """Bytes of the padded A and B tiles the copy pass would allocate for ``cfg``."""
    a = cfg.tbm * (cfg.tbk + cfg.padding_a)
    b = cfg.tbk * (cfg.tbn + cfg.padding_b)
    return (a + b) * elem.nbytes


def module_shared_bytes(m: Module) -> int:
    return sum(g.type.footprint * g.type.elem.nbytes for g in m.globals
               if g.type.space == MemorySpace.SHARED)


def analyze(target, cfg, problem=None, sm_shared_bytes: int = SM_SHARED_BYTES) -> ResourceReport:
    """Resource report for ``cfg``.

    ``target`` may be a module, a mapped kernel or ``None``.  Shared memory is
    read from the target's shared globals when it has any, and otherwise
    projected from the tile sizes, so configurations too large to build can
    still be reported on.
    """
    module = target.module if isinstance(target, GpuKernel) else target
    shared = module_shared_bytes(module) if module is not None else 0
    if shared == 0:
        shared = projected_shared_bytes(cfg)

    tiles_m = max(cfg.wm // cfg.wmma_m, 0) if cfg.wmma_m > 0 else 0
    tiles_n = max(cfg.wn // cfg.wmma_n, 0) if cfg.wmma_n > 0 else 0
    frags = tiles_m * tiles_n + tiles_m + tiles_n
    regs = frags * FRAGMENT_ELEMS // 32 + REGISTER_OVERHEAD
    warps = (cfg.tbm // cfg.wm if cfg.wm > 0 else 0) * (cfg.tbn // cfg.wn if cfg.wn > 0 else 0)
    by_shared = sm_shared_bytes // shared if shared > 0 else SM_MAX_WARPS
    by_warps = SM_MAX_WARPS // warps if warps > 0 else 0
    blocks = min(by_shared, by_warps)

    issues = list(cfg.violations(problem))
    if shared > SHARED_LIMIT_BYTES:
        issues.append(f"shared memory {shared} bytes exceeds {SHARED_LIMIT_BYTES}")
    if warps * 32 > MAX_BLOCK_THREADS:
        issues.append(f"{warps * 32} threads per block exceeds {MAX_BLOCK_THREADS}")
    if regs > MAX_REGISTERS:
        issues.append(f"estimated {regs} registers per thread exceeds {MAX_REGISTERS}")
    return ResourceReport(shared, frags, regs, warps, blocks, tuple(issues))
