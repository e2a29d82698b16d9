"""Block/warp mapping, pipeline finalization and kernel text emission."""

from .emit import emit_kernel_text
from .finalize import finalize_pipeline
from .kernel import GpuKernel, map_to_gpu

__all__ = ["GpuKernel", "map_to_gpu", "finalize_pipeline", "emit_kernel_text"]
