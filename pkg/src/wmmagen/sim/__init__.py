"""Sequential interpreter and warp-level GPU machine model."""

from .gpu import (
    Access, MachineParams, Race, SimMetrics, count_bank_conflicts, default_block_order, race_check, run_gpu,
)
from .memory import Deadlock, OutOfBounds, SimError, UninitializedValue
from .numerics import wmma_mma, wmma_reference
from .sequential import run_sequential

__all__ = [
    "Access", "MachineParams", "Race", "SimMetrics", "count_bank_conflicts", "default_block_order", "race_check",
    "run_gpu", "Deadlock", "OutOfBounds", "SimError", "UninitializedValue", "wmma_mma", "wmma_reference",
    "run_sequential",
]
