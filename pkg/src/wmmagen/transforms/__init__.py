"""Module-to-module rewrites taking the naive matmul to a pipelined WMMA nest."""

from .config import PassError, PassResult, TileConfig
from .copies import generate_shared_copies, pad_shared_buffer, shared_bytes
from .cse import cse
from .dependence import is_parallel, loop_dependences
from .hoist import hoist_accumulator
from .loops import permute_loops, unroll_full
from .parallel import brute_force_parallel, parallelize
from .pipeline import insert_barriers, split_pipeline
from .tiling import tile_loop_nest
from .vectorize import vectorize_copies
from .wmma import raise_to_wmma

OUTER_FROM = ("i", "j", "k", "ii", "jj")
OUTER_TO = ("i", "j", "ii", "jj", "k")
INNER_FROM = ("iii", "jjj", "kk")
INNER_TO = ("kk", "iii", "jjj")

__all__ = [
    "PassError", "PassResult", "TileConfig", "generate_shared_copies", "pad_shared_buffer", "shared_bytes",
    "cse", "is_parallel", "loop_dependences", "hoist_accumulator", "permute_loops", "unroll_full",
    "brute_force_parallel", "parallelize", "insert_barriers", "split_pipeline", "tile_loop_nest",
    "vectorize_copies", "raise_to_wmma", "OUTER_FROM", "OUTER_TO", "INNER_FROM", "INNER_TO",
]
