"""Mapping of the parallel loop nest onto the grid / block / warp hierarchy.

The two outer parallel loops become the grid (``bx``, ``by``), the next two
become the warp decomposition of a block::

    warpX = wid mod warpsX        warpY = wid floordiv warpsX

Copy nests are spread over every thread of the block.  Thread ``t = wid * 32
+ lane`` handles the vector items whose linear index is ``t + s * T`` for
``s = 0, 1, ...`` where ``T`` is the block size, so consecutive lanes touch
consecutive addresses of a row.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..ir.affine import AffineExpr, dim
from ..ir.nodes import LaunchConfig, Loop, Module, Op, is_copy_root, substitute_nodes, walk
from ..ir.types import MemorySpace
from ..transforms.config import PassError, TileConfig
from ..transforms.util import finish

THREADS_PER_WARP = 32
MAX_BLOCK_THREADS = 1024


@dataclass(frozen=True)
class GpuKernel:
    """A module whose single function carries a launch configuration."""

    module: Module

    def __post_init__(self):
        if self.module.func.launch is None:
            raise ValueError("kernel function has no launch configuration")

    @property
    def launch(self) -> LaunchConfig:
        return self.module.func.launch

    @property
    def body(self) -> tuple:
        return self.module.func.body

    @property
    def shared_globals(self) -> tuple:
        used = {n.buffer for n, _ in walk(self.body) if isinstance(n, Op) and n.buffer is not None}
        return tuple(g for g in self.module.globals
                     if g.type.space == MemorySpace.SHARED and g.name in used)

    def with_body(self, body) -> "GpuKernel":
        return GpuKernel(finish(self.module.with_body(body)))


def _band(body):
    chain = []
    nodes = body
    for tag in ("i", "j", "ii", "jj"):
        loops = [n for n in nodes if isinstance(n, Loop)]
        if len(nodes) != 1 or len(loops) != 1 or loops[0].tag != tag:
            raise PassError(f"expected a perfect nest with the loop tagged {tag!r} here")
        lp = loops[0]
        if not lp.attr("parallel"):
            raise PassError(f"loop %{lp.iv} ({tag}) is not marked parallel; run parallelize first")
        if lp.trip_count is None:
            raise PassError(f"loop %{lp.iv} has a non-constant trip count")
        chain.append(lp)
        nodes = lp.body
    return chain


def _distribute(root: Loop, threads: int) -> Loop:
    inner = [n for n in root.body if isinstance(n, Loop)]
    if len(inner) != 1 or len(root.body) != 1:
        raise PassError(f"copy nest %{root.iv} is not a two-level nest")
    inner = inner[0]
    if root.lower != AffineExpr.constant(0) or inner.lower != AffineExpr.constant(0) or root.step != 1:
        raise PassError(f"copy nest %{root.iv} does not start at zero with unit row step")
    rows, cols, w = root.extent, inner.extent, inner.step
    per_row = cols // w
    items = rows * per_row
    if items % threads:
        raise PassError(
            f"copy nest %{root.iv} moves {items} vectors, not a multiple of the {threads} block threads")
    s = root.iv + "s"
    lin = dim("wid") * THREADS_PER_WARP + dim("lane") + dim(s) * threads
    mapping = {root.iv: lin.floordiv(per_row), inner.iv: lin.mod(per_row) * w}
    body = substitute_nodes(inner.body, mapping)
    return Loop(s, 0, items // threads, 1, body, attrs=dict(root.attrs) | {"distributed": True})


def _map_copies(nodes, threads: int) -> tuple:
    out = []
    for n in nodes:
        if is_copy_root(n):
            out.append(_distribute(n, threads))
        elif isinstance(n, Loop):
            out.append(replace(n, body=_map_copies(n.body, threads)))
        else:
            out.append(n)
    return tuple(out)


def map_to_gpu(m: Module, cfg: TileConfig | None = None, problem=None) -> GpuKernel:
    f = m.func
    if f.launch is not None:
        raise PassError("module is already mapped")
    bi, bj, wi, wj = _band(f.body)
    launch = LaunchConfig(bi.trip_count, bj.trip_count, wi.trip_count, wj.trip_count)
    if cfg is not None:
        if (launch.warps_x, launch.warps_y) != (cfg.warps_x, cfg.warps_y):
            raise PassError(
                f"warp loops have trip counts {launch.warps_x}x{launch.warps_y}, "
                f"tiles imply {cfg.warps_x}x{cfg.warps_y}")
    if problem is not None and cfg is not None:
        if (launch.grid_x, launch.grid_y) != (problem.M // cfg.tbm, problem.N // cfg.tbn):
            raise PassError("block loops do not cover the problem with one tile per block")
    if launch.block_threads > MAX_BLOCK_THREADS:
        raise PassError(f"{launch.block_threads} threads per block exceeds {MAX_BLOCK_THREADS}")
    ix = bi.lower + dim("bx") * bi.step
    jy = bj.lower + dim("by") * bj.step
    wx = wi.lower.substitute({bi.iv: ix, bj.iv: jy}) + dim("wid").mod(launch.warps_x) * wi.step
    wy = wj.lower.substitute({bi.iv: ix, bj.iv: jy}) + dim("wid").floordiv(launch.warps_x) * wj.step
    body = substitute_nodes(wj.body, {bi.iv: ix, bj.iv: jy, wi.iv: wx, wj.iv: wy})
    body = _map_copies(body, launch.block_threads)
    func = replace(f, body=body, launch=launch)
    return GpuKernel(finish(replace(m, funcs=(func,))))
