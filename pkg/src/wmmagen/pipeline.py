"""The fixed lowering pipeline: pass names, ordering, stop and resume.

Passes take the current module (or, from ``map-gpu`` on, a mapped kernel)
and return the next one.  Every pass output is verified, and the report
records per-pass structural deltas so runs can be compared at a glance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .gpu import GpuKernel, finalize_pipeline, map_to_gpu
from .ir.nodes import Module
from .ir.parser import IRVerifyError, parse_ir
from .ir.verifier import verify
from .transforms import (
    INNER_FROM, INNER_TO, OUTER_FROM, OUTER_TO, PassError, PassResult, cse, generate_shared_copies,
    insert_barriers, pad_shared_buffer, parallelize, permute_loops, raise_to_wmma, tile_loop_nest,
    unroll_full, vectorize_copies,
)
from .transforms.hoist import hoist_accumulator_with_note
from .transforms.pipeline import split_pipeline_with_note
from .transforms.util import structural_delta


@dataclass(frozen=True)
class Pass:
    name: str
    run: Callable  # (state, cfg, problem) -> state or (state, note)
    gpu: bool = False  # consumes or produces a mapped kernel


PASSES = (
    Pass("tile", lambda m, cfg, p: tile_loop_nest(m, cfg)),
    Pass("copies", lambda m, cfg, p: generate_shared_copies(m, cfg)),
    Pass("pad", lambda m, cfg, p: pad_shared_buffer(m, cfg)),
    Pass("wmma", lambda m, cfg, p: raise_to_wmma(m, cfg)),
    Pass("permute-outer", lambda m, cfg, p: permute_loops(m, OUTER_FROM, OUTER_TO)),
    Pass("permute-inner", lambda m, cfg, p: permute_loops(m, INNER_FROM, INNER_TO)),
    Pass("unroll", lambda m, cfg, p: unroll_full(m, INNER_FROM)),
    Pass("cse", lambda m, cfg, p: cse(m)),
    Pass("hoist", lambda m, cfg, p: hoist_accumulator_with_note(m)),
    Pass("pipeline", lambda m, cfg, p: split_pipeline_with_note(m)),
    Pass("barriers", lambda m, cfg, p: insert_barriers(m)),
    Pass("vectorize", lambda m, cfg, p: vectorize_copies(m, cfg.vector_bits)),
    Pass("parallelize", lambda m, cfg, p: parallelize(m)),
    Pass("map-gpu", lambda m, cfg, p: map_to_gpu(m, cfg, p), gpu=True),
    Pass("finalize-pipeline", lambda k, cfg, p: finalize_pipeline(k), gpu=True),
)

PASS_NAMES = tuple(p.name for p in PASSES)
AFFINE_PASSES = tuple(p.name for p in PASSES if not p.gpu)


def check_pass_names(names) -> None:
    for n in names:
        if n not in PASS_NAMES:
            raise ValueError(f"unknown pass {n!r}; expected one of {', '.join(PASS_NAMES)}")


def module_of(state) -> Module:
    return state.module if isinstance(state, GpuKernel) else state


def load_state(text: str):
    """Parse a dump; a module with a launch configuration comes back as a kernel."""
    m = parse_ir(text)
    return GpuKernel(m) if m.func.launch is not None else m


def run_passes(state, cfg, problem, start_after: str | None = None, stop: str | None = None,
               skip=(), on_pass: Callable | None = None) -> PassResult:
    """Run the passes after ``start_after`` up to and including ``stop``.

    ``skip`` names passes to leave out (the module passes through unchanged).
    ``on_pass(name, state)`` is called after each pass that ran.  A rejection
    is re-raised as :class:`PassError` carrying the pass name.  Tile-size
    violations are reported before any pass runs.
    """
    check_pass_names([n for n in (start_after, stop) if n] + list(skip))
    cfg.check(problem)
    names = list(PASS_NAMES)
    first = names.index(start_after) + 1 if start_after else 0
    last = names.index(stop) if stop else len(names) - 1
    if first > last + 1:
        raise ValueError(f"cannot stop at {stop!r} when resuming after {start_after!r}")
    report = []
    for p in PASSES[first:last + 1]:
        if p.name in skip:
            report.append((p.name, {"skipped": "yes"}))
            continue
        before = module_of(state)
        try:
            out = p.run(state, cfg, problem)
        except PassError as exc:
            exc.pass_name = exc.pass_name or p.name
            raise
        except (ValueError, IRVerifyError) as exc:
            raise PassError(str(exc), p.name) from exc
        note = None
        if isinstance(out, tuple):
            out, note = out
        diags = verify(module_of(out))
        if diags:
            raise PassError("output does not verify: " + "; ".join(map(str, diags)), p.name)
        delta = structural_delta(before, module_of(out))
        if note:
            delta["note"] = repr(note)
        report.append((p.name, delta))
        state = out
        if on_pass is not None:
            on_pass(p.name, state)
    return PassResult(state, report)
