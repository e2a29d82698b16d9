"""Sequential reference interpreter for affine-level modules.

Loops execute in program order.  As a speed-up, a loop whose iterations the
dependence test proves independent (treating idempotent full-buffer copies as
harmless) is run in lock step: its induction variable becomes a numpy array
along a dedicated lane axis and every op inside executes once for all
iterations.  This gives the same results as one-at-a-time execution; pass
``lanes=False`` to get the plain scalar loop order for cross-checking.
"""

from __future__ import annotations

import numpy as np

from ..ir.nodes import Loop, Module, Op, OpKind, walk
from ..ir.types import VectorType
from ..transforms.dependence import RULE_LANES, is_parallel
from .memory import Memory, SimError, UninitializedValue
from .numerics import addf, extf, mulf, wmma_mma


class _Interpreter:
    def __init__(self, module: Module, inputs: dict, lanes: bool):
        self.module = module
        self.func = module.func
        if self.func.launch is not None:
            raise SimError("run_sequential takes an affine module; use run_gpu for kernels")
        self.mem = Memory(module, self.func, inputs)
        self.vtypes = {}
        for n, _ in walk(self.func.body):
            if isinstance(n, Op):
                for r in n.results:
                    self.vtypes[r] = n.type
        self.lane_loop = {}
        if lanes:
            for n, _ in walk(self.func.body):
                if isinstance(n, Loop) and n.trip_count and n.trip_count > 1 and not n.iter_args:
                    self.lane_loop[id(n)] = is_parallel(n, module, self.func, RULE_LANES)
        self.n_axes = self._depth(self.func.body)

    def _depth(self, nodes) -> int:
        best = 0
        for n in nodes:
            if isinstance(n, Loop):
                d = self._depth(n.body) + (1 if self.lane_loop.get(id(n)) else 0)
                best = max(best, d)
        return best

    def run(self) -> dict:
        self.block(self.func.body, {}, {}, 0)
        return self.mem.outputs()

    def block(self, nodes, ivs, vals, axis):
        for n in nodes:
            if isinstance(n, Loop):
                self.loop(n, ivs, vals, axis)
            else:
                out = self.op(n, ivs, vals)
                if out is not None:
                    return out
        return None

    def loop(self, lp: Loop, ivs, vals, axis):
        trip = lp.trip_count
        if trip is None:
            raise SimError(f"loop %{lp.iv} has a non-constant trip count")
        lb = lp.lower.evaluate(ivs)
        if self.lane_loop.get(id(lp)):
            shape = [1] * self.n_axes
            shape[axis] = trip
            ivs[lp.iv] = lb + lp.step * np.arange(trip, dtype=np.int64).reshape(shape)
            self.block(lp.body, ivs, vals, axis + 1)
            del ivs[lp.iv]
            return
        carried = [self.get(vals, v) for v in lp.inits]
        for t in range(trip):
            ivs[lp.iv] = lb + t * lp.step
            for a, v in zip(lp.region_args, carried):
                vals[a] = v
            out = self.block(lp.body, ivs, vals, axis)
            if lp.iter_args:
                if out is None:
                    raise SimError(f"loop %{lp.iv} body ended without yield")
                carried = out
        ivs.pop(lp.iv, None)
        if lp.iter_args:
            for r, v in zip(lp.results, carried):
                vals[r] = v

    @staticmethod
    def get(vals, name):
        try:
            return vals[name]
        except KeyError:
            raise UninitializedValue(f"value %{name} used before it was defined") from None

    def op(self, op: Op, ivs, vals):
        k = op.kind
        if k is OpKind.YIELD:
            return [self.get(vals, v) for v in op.operands]
        if k is OpKind.BARRIER:
            return None
        args = [self.get(vals, v) for v in op.operands]
        if op.buffer is not None:
            idx = [e.evaluate(ivs) for e in op.indices]
        if k in (OpKind.LOAD, OpKind.WMMA_LOAD):
            vals[op.results[0]], _ = self.mem.load(op, idx)
        elif k is OpKind.VECTOR_LOAD:
            vals[op.results[0]], _ = self.mem.load(op, idx, op.type.width)
        elif k in (OpKind.STORE, OpKind.WMMA_STORE):
            self.mem.store(op, idx, args[0])
        elif k is OpKind.VECTOR_STORE:
            vt = self.vtypes.get(op.operands[0])
            width = vt.width if isinstance(vt, VectorType) else np.shape(args[0])[-1]
            self.mem.store(op, idx, args[0], width)
        elif k is OpKind.CONSTANT:
            vals[op.results[0]] = np.asarray(op.attr("value"), dtype=op.type.dtype)
        elif k is OpKind.EXTF:
            vals[op.results[0]] = extf(args[0])
        elif k is OpKind.MULF:
            vals[op.results[0]] = mulf(args[0], args[1], op.type)
        elif k is OpKind.ADDF:
            vals[op.results[0]] = addf(args[0], args[1], op.type)
        elif k is OpKind.WMMA_COMPUTE:
            vals[op.results[0]] = wmma_mma(args[0], args[1], args[2], op.type.elem)
        else:  # pragma: no cover
            raise SimError(f"cannot execute {k.value}")
        return None


def run_sequential(module: Module, inputs: dict, lanes: bool = True) -> dict:
    """Execute ``module`` on copies of ``inputs`` and return the final argument buffers."""
    return _Interpreter(module, inputs, lanes).run()
