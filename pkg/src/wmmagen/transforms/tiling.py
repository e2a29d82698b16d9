"""Two-level (thread-block, then warp) tiling of the naive matmul nest."""

from __future__ import annotations

from ..ir.affine import dim
from ..ir.nodes import Loop, Module, substitute_nodes
from .config import PassError, TileConfig
from .util import finish


def _naive_band(m: Module):
    f = m.func
    if len(f.body) != 1 or not isinstance(f.body[0], Loop):
        raise PassError("expected the naive three-loop matmul")
    i = f.body[0]
    if len(i.body) != 1 or not isinstance(i.body[0], Loop):
        raise PassError("expected a perfect i/j/k nest")
    j = i.body[0]
    if len(j.body) != 1 or not isinstance(j.body[0], Loop):
        raise PassError("expected a perfect i/j/k nest")
    k = j.body[0]
    for lp, tag in ((i, "i"), (j, "j"), (k, "k")):
        if lp.tag != tag or lp.step != 1 or not lp.lower.is_constant or lp.lower.const != 0:
            raise PassError(f"loop %{lp.iv} is not the unit-step loop tagged {tag!r}")
        if lp.extent is None:
            raise PassError(f"loop %{lp.iv} has a non-constant trip count")
        if any(isinstance(n, Loop) for n in k.body):
            raise PassError("the k loop body must be straight-line code")
    return i, j, k


def tile_loop_nest(m: Module, cfg: TileConfig) -> Module:
    i, j, k = _naive_band(m)
    M, N, K = i.extent, j.extent, k.extent
    for name, size, tile in (("M", M, cfg.tbm), ("N", N, cfg.tbn), ("K", K, cfg.tbk)):
        if size % tile:
            raise PassError(f"{name}={size} is not a multiple of the thread-block tile {tile}")
    if cfg.tbm % cfg.wm:
        raise PassError(f"tbm={cfg.tbm} is not a multiple of wm={cfg.wm}")
    if cfg.tbn % cfg.wn:
        raise PassError(f"tbn={cfg.tbn} is not a multiple of wn={cfg.wn}")

    body = substitute_nodes(k.body, {i.iv: dim("iii"), j.iv: dim("jjj"), k.iv: dim("kk")})
    I, J, Kb, II, JJ = dim("i"), dim("j"), dim("k"), dim("ii"), dim("jj")
    nest = Loop("kk", Kb, Kb + cfg.tbk, 1, body, attrs={"tag": "kk"})
    nest = Loop("jjj", JJ, JJ + cfg.wn, 1, (nest,), attrs={"tag": "jjj"})
    nest = Loop("iii", II, II + cfg.wm, 1, (nest,), attrs={"tag": "iii"})
    nest = Loop("jj", J, J + cfg.tbn, cfg.wn, (nest,), attrs={"tag": "jj"})
    nest = Loop("ii", I, I + cfg.tbm, cfg.wm, (nest,), attrs={"tag": "ii"})
    nest = Loop("k", 0, K, cfg.tbk, (nest,), attrs={"tag": "k"})
    nest = Loop("j", 0, N, cfg.tbn, (nest,), attrs={"tag": "j"})
    nest = Loop("i", 0, M, cfg.tbm, (nest,), attrs={"tag": "i"})
    return finish(m.with_body((nest,)))
