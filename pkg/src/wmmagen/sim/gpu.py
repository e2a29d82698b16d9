"""Warp-synchronous machine model for mapped kernels.

Blocks run one after another (in a configurable order) and each gets fresh,
zero-filled shared buffers.  Inside a block every warp is a coroutine that
runs until it reaches a barrier; warps take turns round robin, and a barrier
releases once every warp waits on the same barrier instance.  Lanes of a warp
are numpy arrays of length 32, WMMA ops are single warp-wide steps.

Besides the outputs, a run collects:

* bank conflicts of every warp-wide shared access (extra cycles),
* global 128-byte segments touched per warp-wide global access,
* races: an element of a shared buffer written by one warp and read or
  written by another inside the same barrier interval,
* stall cycles: a global load whose first use is not separated from the load
  by any WMMA compute costs ``global_latency`` cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..ir.affine import FloorDiv, Mod
from ..ir.nodes import Loop, Op, OpKind, walk
from ..ir.types import VectorType
from .memory import Deadlock, Memory, SimError, UninitializedValue, access_extent, element_offsets
from .numerics import addf, extf, mulf, wmma_mma

LANES = np.arange(32, dtype=np.int64)


@dataclass(frozen=True)
class MachineParams:
    """Banking, transaction and latency constants of the abstract device.

    Only ``global_latency`` enters the stall counter; the shared and WMMA
    latencies are kept for reports and future cost models.
    """

    banks: int = 32
    bank_width: int = 4
    transaction_bytes: int = 128
    global_latency: int = 400
    shared_latency: int = 30
    wmma_latency: int = 16
    race_limit: int = 64

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"machine parameter {f.name} must be non-negative")
        if self.banks <= 0 or self.bank_width <= 0 or self.transaction_bytes <= 0:
            raise ValueError("banks, bank_width and transaction_bytes must be positive")

    def with_overrides(self, overrides: dict) -> "MachineParams":
        known = {f.name for f in fields(self)}
        bad = sorted(set(overrides) - known)
        if bad:
            raise ValueError(f"unknown machine parameter {bad[0]!r}")
        return replace(self, **{k: int(v) for k, v in overrides.items()})


@dataclass(frozen=True)
class Race:
    block: tuple
    interval: int
    buffer: str
    index: tuple
    writer: int
    other: int
    kind: str  # "write-write" or "write-read"

    def __str__(self):
        idx = ", ".join(map(str, self.index))
        return (f"{self.kind} on {self.buffer}[{idx}] between warps {self.writer} and {self.other} "
                f"(block {self.block}, interval {self.interval})")


@dataclass(frozen=True)
class Access:
    """One warp-wide memory access.

    ``offsets`` holds flat element offsets shaped (requests, elements per
    request): one row per thread for scalar and vector accesses, one row per
    tile row for WMMA loads and stores.
    """

    block: tuple
    warp: int
    interval: int
    buffer: str
    shared: bool
    write: bool
    elem_bytes: int
    offsets: np.ndarray = field(compare=False)


@dataclass
class SimMetrics:
    bank_conflicts: int = 0
    global_transactions: int = 0
    barriers: int = 0
    race_count: int = 0
    stall_cycles: int = 0
    global_requests: int = 0
    races: list = field(default_factory=list)
    write_census: dict = field(default_factory=dict, compare=False, repr=False)
    trace: list | None = field(default=None, compare=False, repr=False)

    def report(self) -> str:
        lines = [
            f"bank_conflicts={self.bank_conflicts}",
            f"global_transactions={self.global_transactions}",
            f"barriers={self.barriers}",
            f"races={self.race_count}",
            f"stall_cycles={self.stall_cycles}",
            f"global_requests={self.global_requests}",
        ]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# cost functions on single accesses


def access_conflicts_raw(requests, elem_bytes: int, params: MachineParams) -> int:
    """Extra shared-memory cycles for one warp-wide access.

    ``requests`` is shaped (requests, elements per request).  Requests are
    served in phases of ``banks * bank_width`` bytes; in each phase the cost
    is the largest number of distinct words mapped to a single bank, minus
    one.  Repeated words are broadcast for free.
    """
    req_bytes = requests.shape[1] * elem_bytes
    per_phase = max(1, (params.banks * params.bank_width) // req_bytes)
    words = (requests * elem_bytes) // params.bank_width
    total = 0
    for start in range(0, requests.shape[0], per_phase):
        w = np.unique(words[start:start + per_phase])
        total += int(np.bincount(w % params.banks, minlength=params.banks).max()) - 1
    return total


def access_transactions_raw(requests, elem_bytes: int, params: MachineParams) -> int:
    """Distinct ``transaction_bytes`` segments touched by one warp-wide access."""
    seg = (requests * elem_bytes) // params.transaction_bytes
    return int(np.unique(seg).size)


def access_conflicts(acc: Access, params: MachineParams) -> int:
    return access_conflicts_raw(acc.offsets, acc.elem_bytes, params)


def access_transactions(acc: Access, params: MachineParams) -> int:
    return access_transactions_raw(acc.offsets, acc.elem_bytes, params)


def count_bank_conflicts(trace, params: MachineParams | None = None) -> int:
    params = params or MachineParams()
    return sum(access_conflicts(a, params) for a in trace if a.shared)


def _interval_races(accesses, shapes: dict, limit: int):
    """Races among ``accesses`` that all belong to one block interval."""
    by_buf = {}
    for a in accesses:
        if a.shared:
            by_buf.setdefault(a.buffer, []).append(a)
    races, count = [], 0
    for buf in sorted(by_buf):
        accs = by_buf[buf]
        warps = sorted({a.warp for a in accs})
        if len(warps) < 2 or not any(a.write for a in accs):
            continue
        size = int(np.prod(shapes[buf]))
        pos = {w: i for i, w in enumerate(warps)}
        wr = np.zeros((len(warps), size), dtype=bool)
        rd = np.zeros((len(warps), size), dtype=bool)
        for a in accs:
            (wr if a.write else rd)[pos[a.warp], a.offsets.ravel()] = True
        n_wr = wr.sum(axis=0)
        others_rd = rd & ~wr
        racy = (n_wr >= 2) | ((n_wr == 1) & others_rd.any(axis=0))
        hits = np.flatnonzero(racy)
        count += hits.size
        block, interval = accs[0].block, accs[0].interval
        for e in hits[:max(0, limit - len(races))]:
            writer = int(np.argmax(wr[:, e]))
            rest = np.flatnonzero(wr[:, e])
            if rest.size >= 2:
                other, kind = int(rest[1]), "write-write"
            else:
                other, kind = int(np.argmax(others_rd[:, e])), "write-read"
            index = tuple(int(x) for x in np.unravel_index(e, shapes[buf]))
            races.append(Race(block, interval, buf, index, warps[writer], warps[other], kind))
    return races, count


def race_check(trace, shapes: dict, limit: int | None = None) -> list:
    """All races in a recorded trace; ``shapes`` maps buffers to allocated shapes."""
    groups = {}
    for a in trace:
        groups.setdefault((a.block, a.interval), []).append(a)
    out = []
    for key in groups:
        races, _ = _interval_races(groups[key], shapes, limit if limit is not None else 1 << 62)
        out.extend(races)
    return out


# --------------------------------------------------------------------------
# execution


def _pattern_dims(op: Op, shared: bool):
    """Split the index dimensions of ``op`` into (linear, keyed, coefficients).

    Linear dimensions appear only as top-level terms, never under floordiv or
    mod; their contribution is a per-index shift.  Lanes are always part of
    the pattern itself.
    """
    used, nested = set(), set()
    for e in op.indices:
        used |= e.dims()
        for atom, _ in e.terms:
            if isinstance(atom, (FloorDiv, Mod)):
                nested |= atom.expr.dims()
    used.discard("lane")
    linear = () if shared else tuple(sorted(used - nested))
    keyed = tuple(sorted(used - set(linear)))
    coeffs = [[e.coeff(d) for d in linear] for e in op.indices]
    return linear, keyed, coeffs


class _Block:
    def __init__(self, sim: "_GpuSim", bx: int, by: int):
        self.sim = sim
        self.bx, self.by = bx, by
        self.interval = 0
        self.accesses = []


class _GpuSim:
    def __init__(self, kernel, inputs: dict, params: MachineParams, segment: int | None, record: bool):
        self.kernel = kernel
        self.module = kernel.module
        self.func = kernel.module.func
        self.params = params
        self.segment = segment
        self.mem = Memory(self.module, self.func, inputs)
        self.metrics = SimMetrics(trace=[] if record else None)
        self.shapes = {name: t.alloc_shape for name, t in self.mem.types.items()}
        self.op_info = {}
        self.cache = {}
        self.vtypes = {}
        for n, _ in walk(self.func.body):
            if isinstance(n, Op):
                for r in n.results:
                    self.vtypes[r] = n.type
        for name, t in self.func.args:
            self.metrics.write_census[name] = np.zeros(t.footprint, dtype=np.int64)

    # --- bookkeeping ------------------------------------------------------
    def locate(self, op: Op, env, width: int):
        """(offsets, requests, cost) of ``op`` in ``env``, memoised per access pattern.

        Dimensions that enter the indices only as plain terms (block ids and
        the k index, for global buffers) shift the whole pattern.  The cache
        key holds the remaining dimension values plus, for global buffers, the
        shift's position inside a transaction segment, which is all the cost
        depends on.  Shared buffers keep every non-lane dimension in the key so
        bank mapping is exact.
        """
        t = self.mem.types[op.buffer]
        info = self.op_info.get(id(op))
        if info is None:
            linear, keyed, coeffs = _pattern_dims(op, self.mem.is_shared(op.buffer))
            flat = [sum(cs[i] * st for cs, st in zip(coeffs, t.strides)) for i in range(len(linear))]
            info = self.op_info[id(op)] = (linear, keyed, coeffs, flat)
        linear, keyed, coeffs, flat = info
        delta = sum(c * env[d] for c, d in zip(flat, linear))
        align = (delta * t.elem.nbytes) % self.params.transaction_bytes
        key = (id(op), width, align) + tuple(env[d] for d in keyed)
        hit = self.cache.get(key)
        if hit is None:
            env0 = dict(env)
            env0.update((d, 0) for d in linear)
            idx = [e.evaluate(env0) for e in op.indices]
            shifts = [sum(c * env[d] for c, d in zip(cs, linear)) for cs in coeffs]
            off = element_offsets(t, op, [v + sh for v, sh in zip(idx, shifts)], width) - delta
            if op.kind in (OpKind.WMMA_LOAD, OpKind.WMMA_STORE):
                req = off
            elif op.kind in (OpKind.VECTOR_LOAD, OpKind.VECTOR_STORE):
                req = np.broadcast_to(off, (32, off.shape[-1]))
            else:
                req = np.broadcast_to(off, (32,))[:, None]
            req = np.ascontiguousarray(req)
            if self.mem.is_shared(op.buffer):
                cost = access_conflicts_raw(req + delta, t.elem.nbytes, self.params)
            else:
                cost = access_transactions_raw(req + delta, t.elem.nbytes, self.params)
            rows, cols = access_extent(op, width)
            bounds = []
            for d, v in enumerate(idx):
                ext = cols if d == t.rank - 1 else (rows if d == t.rank - 2 else 1)
                bounds.append((int(np.min(v)), int(np.max(v)) + ext, t.shape[d]))
            hit = self.cache[key] = (off, req, cost, bounds)
        off, req, cost, bounds = hit
        if linear:
            for (lo, hi, size), cs in zip(bounds, coeffs):
                sh = sum(c * env[d] for c, d in zip(cs, linear))
                if lo + sh < 0 or hi + sh > size:
                    element_offsets(t, op, [e.evaluate(env) for e in op.indices], width)  # raises
            return off + delta, req + delta, cost
        return off, req, cost

    def record(self, blk: _Block, warp: int, op: Op, req, cost, write: bool):
        shared = self.mem.is_shared(op.buffer)
        m = self.metrics
        acc = None
        if shared or m.trace is not None:
            nbytes = self.mem.types[op.buffer].elem.nbytes
            acc = Access((blk.bx, blk.by), warp, blk.interval, op.buffer, shared, write, nbytes, req)
        if shared:
            m.bank_conflicts += cost
            blk.accesses.append(acc)
        else:
            m.global_transactions += cost
            m.global_requests += 1
            if write and op.buffer in m.write_census:
                np.add.at(m.write_census[op.buffer], np.unique(req), 1)
        if m.trace is not None:
            m.trace.append(acc)

    def close_interval(self, blk: _Block):
        room = self.params.race_limit - len(self.metrics.races)
        races, count = _interval_races(blk.accesses, self.shapes, room)
        self.metrics.races.extend(races)
        self.metrics.race_count += count
        blk.accesses = []
        blk.interval += 1

    # --- warp coroutine ---------------------------------------------------
    def warp(self, blk: _Block, wid: int):
        env = {"bx": blk.bx, "by": blk.by, "wid": wid, "lane": LANES}
        state = {"wmma": 0, "pending": {}, "ops": 0}
        yield from self.nodes(self.func.body, env, {}, (), blk, wid, state)

    def nodes(self, nodes, env, vals, stack, blk, wid, state):
        for n in nodes:
            if isinstance(n, Loop):
                yield from self.loop(n, env, vals, stack, blk, wid, state)
                continue
            if n.kind is OpKind.YIELD:
                self.use(n.operands, state)
                return [self.get(vals, v) for v in n.operands]
            if n.kind is OpKind.BARRIER:
                yield ("barrier", (id(n), stack))
                continue
            self.op(n, env, vals, blk, wid, state)
            if self.segment:
                state["ops"] += 1
                if state["ops"] % self.segment == 0:
                    yield ("tick", None)
        return None

    def loop(self, lp: Loop, env, vals, stack, blk, wid, state):
        lb = lp.lower.evaluate(env)
        trip = lp.trip_count
        if trip is None:
            # bounds may depend on warp-uniform ids; a lane-dependent bound would diverge
            ub = lp.upper.evaluate(env)
            if np.ndim(lb) or np.ndim(ub) or lp.step <= 0:
                raise SimError(f"loop %{lp.iv} bounds are not warp-uniform")
            trip = max(0, -(-(int(ub) - int(lb)) // lp.step))
        self.use(lp.inits, state)
        carried = [self.get(vals, v) for v in lp.inits]
        for t in range(trip):
            env[lp.iv] = lb + t * lp.step
            for a, v in zip(lp.region_args, carried):
                vals[a] = v
            out = yield from self.nodes(lp.body, env, vals, stack + (t,), blk, wid, state)
            if lp.iter_args:
                if out is None:
                    raise SimError(f"loop %{lp.iv} body ended without yield")
                carried = out
        env.pop(lp.iv, None)
        for r, v in zip(lp.results, carried):
            vals[r] = v

    @staticmethod
    def get(vals, name):
        try:
            return vals[name]
        except KeyError:
            raise UninitializedValue(f"value %{name} used before it was defined") from None

    def use(self, names, state):
        pending = state["pending"]
        for v in names:
            issued = pending.pop(v, None)
            if issued is not None and issued == state["wmma"]:
                self.metrics.stall_cycles += self.params.global_latency

    def op(self, op: Op, env, vals, blk, wid, state):
        k = op.kind
        self.use(op.operands, state)
        args = [self.get(vals, v) for v in op.operands]
        if k in (OpKind.LOAD, OpKind.VECTOR_LOAD, OpKind.WMMA_LOAD):
            width = op.type.width if k is OpKind.VECTOR_LOAD else 1
            off, req, cost = self.locate(op, env, width)
            value = self.mem.read(op.buffer, off)
            if k is not OpKind.WMMA_LOAD:
                lane_rank = 2 if k is OpKind.VECTOR_LOAD else 1
                if np.ndim(value) < lane_rank:
                    value = np.broadcast_to(value, (32,) + np.shape(value))
                if not self.mem.is_shared(op.buffer):
                    state["pending"][op.results[0]] = state["wmma"]
            vals[op.results[0]] = value
            self.record(blk, wid, op, req, cost, write=False)
        elif k in (OpKind.STORE, OpKind.VECTOR_STORE, OpKind.WMMA_STORE):
            width = 1
            if k is OpKind.VECTOR_STORE:
                vt = self.vtypes.get(op.operands[0])
                width = vt.width if isinstance(vt, VectorType) else np.shape(args[0])[-1]
            off, req, cost = self.locate(op, env, width)
            self.mem.write(op.buffer, off, args[0])
            self.record(blk, wid, op, req, cost, write=True)
        elif k is OpKind.WMMA_COMPUTE:
            vals[op.results[0]] = wmma_mma(args[0], args[1], args[2], op.type.elem)
            state["wmma"] += 1
        elif k is OpKind.CONSTANT:
            vals[op.results[0]] = np.asarray(op.attr("value"), dtype=op.type.dtype)
        elif k is OpKind.EXTF:
            vals[op.results[0]] = extf(args[0])
        elif k is OpKind.MULF:
            vals[op.results[0]] = mulf(args[0], args[1], op.type)
        elif k is OpKind.ADDF:
            vals[op.results[0]] = addf(args[0], args[1], op.type)
        else:  # pragma: no cover
            raise SimError(f"cannot execute {k.value}")

    # --- scheduling -------------------------------------------------------
    def run_block(self, bx: int, by: int):
        self.mem.reset_shared()
        blk = _Block(self, bx, by)
        n = self.kernel.launch.warps_per_block
        gens = [self.warp(blk, w) for w in range(n)]
        done = [False] * n
        waiting = [None] * n
        while True:
            for w in range(n):
                if done[w] or waiting[w] is not None:
                    continue
                try:
                    kind, key = next(gens[w])
                except StopIteration:
                    done[w] = True
                    continue
                if kind == "barrier":
                    waiting[w] = key
            if all(done):
                self.close_interval(blk)
                return
            live = [w for w in range(n) if not done[w]]
            if all(waiting[w] is not None for w in live):
                if any(done):
                    finished = [w for w in range(n) if done[w]]
                    raise Deadlock(f"block ({bx}, {by}): warps {live} wait at a barrier "
                                   f"that finished warps {finished} never reach")
                if len({waiting[w] for w in live}) > 1:
                    raise Deadlock(f"block ({bx}, {by}): warps wait at different barriers")
                self.metrics.barriers += 1
                self.close_interval(blk)
                waiting = [None] * n

    def run(self, order):
        for bx, by in order:
            self.run_block(bx, by)
        m = self.metrics
        for name, t in self.func.args:
            full = m.write_census[name].reshape(t.alloc_shape)
            m.write_census[name] = full[tuple(slice(0, s) for s in t.shape)].copy()
        return self.mem.outputs(), m


def default_block_order(launch) -> list:
    return [(bx, by) for bx in range(launch.grid_x) for by in range(launch.grid_y)]


def run_gpu(kernel, inputs: dict, params: MachineParams | None = None, block_order=None,
            segment: int | None = None, record_trace: bool = False):
    """Run a mapped kernel; returns ``(outputs, SimMetrics)``.

    ``block_order`` lists every ``(bx, by)`` exactly once.  ``segment`` makes
    each warp yield after that many ops as well as at barriers, which changes
    the interleaving but never the result of a race-free kernel.
    """
    params = params or MachineParams()
    if segment is not None and segment <= 0:
        raise ValueError("segment must be positive")
    full = default_block_order(kernel.launch)
    order = full if block_order is None else [tuple(b) for b in block_order]
    if sorted(order) != full:
        raise ValueError("block_order must list every block of the grid exactly once")
    return _GpuSim(kernel, inputs, params, segment, record_trace).run(order)
