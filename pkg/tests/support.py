"""Helpers shared by the test modules."""

from dataclasses import replace

from hypothesis import settings

from wmmagen.cli import TOLERANCE, make_inputs, max_rel_error, reference
from wmmagen.ir import Loop, ProblemConfig, build_naive_matmul
from wmmagen.pipeline import PASS_NAMES, module_of, run_passes
from wmmagen.transforms import TileConfig
from wmmagen.transforms.util import is_barrier

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

SMALL = TileConfig(64, 64, 32, 32, 32)
ACCEPTANCE = []  # "criterion N: PASS|FAIL ..." lines, echoed in the terminal summary
LISTING = TileConfig(128, 128, 64, 64, 64)

__all__ = [
    "TOLERANCE", "make_inputs", "max_rel_error", "reference", "PASS_NAMES", "module_of", "SMALL", "LISTING",
    "lower", "strip_barriers", "problem", "ACCEPTANCE",
]


def problem(m=128, n=None, k=None, accum="f32") -> ProblemConfig:
    return ProblemConfig(m, n if n is not None else m, k if k is not None else m, accum)


def lower(p: ProblemConfig, cfg: TileConfig, stop=None, skip=()):
    """Run the pipeline from the naive matmul through ``stop`` (default: all passes)."""
    return run_passes(build_naive_matmul(p), cfg, p, stop=stop, skip=skip).module


def strip_barriers(nodes) -> tuple:
    out = []
    for n in nodes:
        if is_barrier(n):
            continue
        if isinstance(n, Loop):
            n = replace(n, body=strip_barriers(n.body))
        out.append(n)
    return tuple(out)
