import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wmmagen.ir import (
    AffineExpr, Loop, OpKind, build_naive_matmul, count_kinds, dim, loops_in, ops_in, parse_ir, print_ir,
)
from wmmagen.ir.nodes import NameGen, find_loop
from wmmagen.sim import run_sequential
from wmmagen.transforms import (
    INNER_FROM, INNER_TO, OUTER_FROM, OUTER_TO, PassError, TileConfig, brute_force_parallel, cse,
    generate_shared_copies, hoist_accumulator, insert_barriers, pad_shared_buffer, parallelize, permute_loops,
    raise_to_wmma, shared_bytes, split_pipeline, tile_loop_nest, unroll_full, vectorize_copies,
)
from wmmagen.transforms.hoist import hoist_accumulator_with_note
from wmmagen.transforms.loops import unroll_loop
from wmmagen.transforms.pipeline import split_pipeline_with_note

from support import LISTING, SMALL, lower, make_inputs, problem


def tags_in_order(m):
    return [lp.tag for lp in loops_in(m.func.body)]


def band(m, tags):
    return [find_loop(m.func.body, t) for t in tags]


def same_result(m1, m2, p, seeds=(0,)):
    for s in seeds:
        inputs = make_inputs(p, s)
        a = run_sequential(m1, inputs)["C"]
        b = run_sequential(m2, inputs)["C"]
        if not np.array_equal(a, b):
            return False
    return True


class TestTile:
    def test_listing_steps_at_full_scale(self):
        m = tile_loop_nest(build_naive_matmul(problem(8192)), LISTING)
        i, j, k = band(m, ("i", "j", "k"))
        assert [(lp.lower.evaluate({}), lp.upper.evaluate({}), lp.step) for lp in (i, j, k)] == [
            (0, 8192, 128), (0, 8192, 128), (0, 8192, 64)]
        assert len(list(loops_in(m.func.body))) == 8

    def test_full_size_tile_has_single_trip_outer_loops(self):
        p = problem(64, 32, 48)
        m = tile_loop_nest(build_naive_matmul(p), TileConfig(64, 32, 48, 32, 16))
        assert [lp.trip_count for lp in band(m, ("i", "j", "k"))] == [1, 1, 1]
        assert same_result(build_naive_matmul(p), m, p)

    def test_semantics_bit_identical_256(self):
        p = problem(256)
        naive = build_naive_matmul(p)
        tiled = tile_loop_nest(naive, TileConfig(64, 64, 64, 32, 32))
        assert same_result(naive, tiled, p)

    @pytest.mark.parametrize("dims,name", [((100, 128, 128), "M"), ((128, 96, 128), "N"), ((128, 128, 40), "K")])
    def test_divisibility_names_dimension(self, dims, name):
        with pytest.raises(PassError, match=f"{name}="):
            tile_loop_nest(build_naive_matmul(problem(*dims)), TileConfig(64, 64, 32, 32, 32))


class TestCopies:
    def test_unpadded_shapes(self):
        m = lower(problem(256), LISTING, stop="copies")
        shapes = {g.name: g.type.shape for g in m.globals}
        assert shapes == {"a_smem": (128, 64), "b_smem": (64, 128)}
        assert shared_bytes(m) == 128 * 64 * 2 + 64 * 128 * 2

    def test_c_is_not_staged(self):
        m = lower(problem(128), SMALL, stop="copies")
        assert {op.buffer for op in ops_in(m.func.body) if op.buffer and op.is_write} == {"a_smem", "b_smem", "C"}

    def test_single_intrinsic_tile(self):
        p = problem(32)
        cfg = TileConfig(16, 16, 16, 16, 16)
        before = lower(p, cfg, stop="tile")
        after = generate_shared_copies(before, cfg)
        copy = find_loop(after.func.body, "copy_a")
        assert copy.trip_count == 16 and copy.body[0].trip_count == 16
        assert same_result(before, after, p)

    def test_semantics_ten_seeds(self):
        p = problem(64)
        before = lower(p, SMALL, stop="tile")
        assert same_result(before, generate_shared_copies(before, SMALL), p, seeds=range(10))

    def test_rejects_more_than_48k(self):
        p = problem(256)
        cfg = TileConfig(256, 256, 64, 64, 64)
        with pytest.raises(PassError, match="49152"):
            generate_shared_copies(tile_loop_nest(build_naive_matmul(p), cfg), cfg)


class TestPad:
    def test_listing_shapes(self):
        m = lower(problem(256), LISTING, stop="pad")
        alloc = {g.name: g.type.alloc_shape for g in m.globals}
        assert alloc == {"a_smem": (128, 72), "b_smem": (64, 136)}
        assert {g.name: g.type.shape for g in m.globals} == {"a_smem": (128, 64), "b_smem": (64, 128)}

    def test_pad_zero_is_identity(self):
        cfg = TileConfig(64, 64, 32, 32, 32, 0, 0)
        m = lower(problem(128), cfg, stop="copies")
        assert pad_shared_buffer(m, cfg) == m

    def test_index_expressions_untouched(self):
        before = lower(problem(128), SMALL, stop="copies")
        after = pad_shared_buffer(before, SMALL)
        idx = lambda m: [op.indices for op in ops_in(m.func.body) if op.buffer]  # noqa: E731
        assert idx(before) == idx(after)
        assert same_result(before, after, problem(128))

    def test_rejects_unaligned_padding(self):
        m = lower(problem(128), SMALL, stop="copies")
        with pytest.raises(PassError):
            pad_shared_buffer(m, TileConfig(64, 64, 32, 32, 32, 4, 4))

    def test_rejects_footprint_over_limit_after_padding(self):
        cfg = TileConfig(128, 128, 80, 64, 64, 40, 40)
        p = problem(256, 256, 160)
        m = generate_shared_copies(tile_loop_nest(build_naive_matmul(p), cfg), cfg)
        with pytest.raises(PassError, match="49152"):
            pad_shared_buffer(m, cfg)


class TestRaiseToWmma:
    def test_listing_trip_counts(self):
        m = lower(problem(256), LISTING, stop="wmma")
        inner = band(m, ("iii", "jjj", "kk"))
        assert [(lp.trip_count, lp.step) for lp in inner] == [(4, 16), (4, 16), (4, 16)]

    def test_single_fragment_per_k_block(self):
        m = lower(problem(64), TileConfig(32, 32, 16, 16, 16), stop="unroll")
        k = find_loop(m.func.body, "k")
        assert sum(1 for op in ops_in(k.body) if op.kind is OpKind.WMMA_COMPUTE) == 1

    def test_leading_dimensions_follow_buffers(self):
        m = lower(problem(256), LISTING, stop="wmma")
        lds = {op.buffer: op.attr("ld") for op in ops_in(m.func.body) if op.kind is OpKind.WMMA_LOAD}
        assert lds == {"a_smem": 72, "b_smem": 136, "C": 256}

    def test_replaces_scalar_body(self):
        kinds = count_kinds(lower(problem(128), SMALL, stop="wmma").func.body)
        assert kinds["wmma.load"] == 3 and kinds["wmma.compute"] == 1 and kinds["wmma.store"] == 1
        assert "mulf" not in kinds and "addf" not in kinds

    def test_rejects_extent_not_multiple_of_16(self):
        text = print_ir(build_naive_matmul(problem(8)))
        for old, tag in (("i", "iii"), ("j", "jjj"), ("k", "kk")):
            text = text.replace(f'tag = "{old}"', f'tag = "{tag}"')
        m = parse_ir(text)
        with pytest.raises(PassError, match="multiple of 16"):
            raise_to_wmma(m)


class TestPermute:
    def test_outer_moves_k_inside_warp_loops(self):
        m = lower(problem(128), SMALL, stop="permute-outer")
        order = [t for t in tags_in_order(m) if t in ("i", "j", "k", "ii", "jj", "iii", "jjj", "kk")]
        assert order == ["i", "j", "ii", "jj", "k", "iii", "jjj", "kk"]

    def test_inner_outer_product_order(self):
        m = lower(problem(128), SMALL, stop="permute-inner")
        order = [t for t in tags_in_order(m) if t in INNER_FROM]
        assert order == list(INNER_TO)

    def test_identity_permutation(self):
        m = lower(problem(128), SMALL, stop="wmma")
        assert permute_loops(m, OUTER_FROM, OUTER_FROM) is m

    def test_not_a_permutation(self):
        m = lower(problem(128), SMALL, stop="wmma")
        with pytest.raises(PassError):
            permute_loops(m, ("i", "j"), ("i", "k"))

    def test_rejects_reversed_dependence(self):
        text = """
module {
  func @shift(%X: memref<9x9xf16>) {
    for %i = 0 to 8 step 1 attrs {tag = "i"} {
      for %j = 0 to 8 step 1 attrs {tag = "j"} {
        %0 = load %X[%i, %j + 1] : f16
        store %0, %X[%i + 1, %j]
      }
    }
  }
}
"""
        m = parse_ir(text)
        with pytest.raises(PassError, match="dependence"):
            permute_loops(m, ("i", "j"), ("j", "i"))

    def test_accepts_independent_nest(self):
        text = """
module {
  func @copy(%X: memref<8x8xf16>, %Y: memref<8x8xf16>) {
    for %i = 0 to 8 step 1 attrs {tag = "i"} {
      for %j = 0 to 8 step 1 attrs {tag = "j"} {
        %0 = load %X[%i, %j] : f16
        store %0, %Y[%j, %i]
      }
    }
  }
}
"""
        m = parse_ir(text)
        out = permute_loops(m, ("i", "j"), ("j", "i"))
        assert tags_in_order(out) == ["j", "i"]
        inputs = {"X": np.arange(64).reshape(8, 8), "Y": np.zeros((8, 8))}
        assert np.array_equal(run_sequential(m, inputs)["Y"], run_sequential(out, inputs)["Y"])


class TestUnroll:
    def test_trip_one_inlines_body(self):
        p = problem(4, 4, 1)
        m = build_naive_matmul(p)
        out = unroll_full(m, "k")
        assert tags_in_order(out) == ["i", "j"]
        assert same_result(m, out, p)

    def test_listing_compute_count(self):
        m = lower(problem(256), LISTING, stop="unroll")
        assert count_kinds(m.func.body)["wmma.compute"] == (64 // 16) * (64 // 16) * (64 // 16)

    def test_interpretation_unchanged_ten_seeds(self):
        p = problem(64)
        before = lower(p, SMALL, stop="permute-inner")
        assert same_result(before, unroll_full(before, INNER_FROM), p, seeds=range(10))

    def test_chains_iter_args(self):
        m = lower(problem(128), SMALL, stop="hoist")
        k = find_loop(m.func.body, "k")
        flat, results = unroll_loop(k, NameGen("t"))
        assert set(results) == set(k.results)
        assert not any(isinstance(n, Loop) and n.tag == "k" for n in flat)

    def test_non_constant_trip_count(self):
        lp = Loop("j", AffineExpr.constant(0), dim("i"), 1, ())
        with pytest.raises(PassError, match="non-constant"):
            unroll_loop(lp, NameGen("t"))

    def test_no_matching_loop(self):
        with pytest.raises(PassError):
            unroll_full(build_naive_matmul(problem(4)), "nope")


def fragment_loads(m, buffer):
    return [op for op in ops_in(m.func.body) if op.kind is OpKind.WMMA_LOAD and op.buffer == buffer]


class TestCse:
    def test_listing_load_counts(self):
        m = lower(problem(256), LISTING, stop="unroll")
        assert len(fragment_loads(m, "a_smem")) == 64
        assert len(fragment_loads(m, "b_smem")) == 64
        out = cse(m)
        # oracle: distinct (buffer, index) pairs in the unrolled body
        for buf in ("a_smem", "b_smem"):
            unique = {op.indices for op in fragment_loads(m, buf)}
            assert len(fragment_loads(out, buf)) == len(unique) == 16

    def test_duplicate_load_becomes_one(self):
        text = """
module {
  global @s : memref<16x16xf16, 3>
  func @f(%C: memref<16x16xf32>) {
    %0 = wmma.load @s[0, 0] {ld = 16} : !wmma<a, 16x16x16, f16>
    %1 = wmma.load @s[0, 0] {ld = 16} : !wmma<b, 16x16x16, f16>
    %2 = wmma.load @s[0, 0] {ld = 16} : !wmma<a, 16x16x16, f16>
    %3 = wmma.load %C[0, 0] {ld = 16} : !wmma<c, 16x16x16, f32>
    %4 = wmma.compute %0, %1, %3 : !wmma<c, 16x16x16, f32>
    %5 = wmma.compute %2, %1, %4 : !wmma<c, 16x16x16, f32>
    wmma.store %5, %C[0, 0] {ld = 16}
  }
}
"""
        out = cse(parse_ir(text))
        assert count_kinds(out.func.body)["wmma.load"] == 3

    def test_store_kills_availability(self):
        text = """
module {
  func @f(%X: memref<4xf32>) {
    %0 = load %X[0] : f32
    store %0, %X[1]
    %1 = load %X[0] : f32
    %2 = addf %0, %1 : f32
    store %2, %X[2]
  }
}
"""
        m = parse_ir(text)
        assert cse(m) is m

    def test_no_duplicates_unchanged(self):
        m = build_naive_matmul(problem(8))
        assert cse(m) is m

    def test_semantics(self):
        p = problem(128)
        m = lower(p, SMALL, stop="unroll")
        assert same_result(m, cse(m), p, seeds=range(3))


class TestHoist:
    def test_listing_iter_arg_count(self):
        m = lower(problem(256), LISTING, stop="hoist")
        k = find_loop(m.func.body, "k")
        assert len(k.iter_args) == (64 // 16) * (64 // 16)
        assert not any(op.buffer == "C" for op in ops_in(k.body))
        yield_op = k.body[-1]
        assert yield_op.kind is OpKind.YIELD and len(yield_op.operands) == 16

    def test_c_touched_once_per_warp_tile(self):
        m = lower(problem(256), LISTING, stop="hoist")
        jj = find_loop(m.func.body, "jj")
        c_ops = [op for op in ops_in(jj.body) if op.buffer == "C"]
        assert sum(op.is_read for op in c_ops) == 16 and sum(op.is_write for op in c_ops) == 16

    def test_single_k_block(self):
        p = problem(64, 64, 32)
        before = lower(p, SMALL, stop="cse")
        after = hoist_accumulator(before)
        assert find_loop(after.func.body, "k").iter_args
        assert same_result(before, after, p)

    def test_variant_access_aborts(self):
        m = lower(problem(128), SMALL, stop="cse", skip=("permute-outer",))
        out, note = hoist_accumulator_with_note(m)
        assert out is m
        assert note.startswith("aborted")


class TestSplitPipeline:
    def test_full_scale_main_loop(self):
        m = lower(problem(8192), LISTING, stop="pipeline")
        k = find_loop(m.func.body, "k")
        assert k.attr("pipelined") and k.trip_count == 127
        jj = find_loop(m.func.body, "jj")
        pos = jj.body.index(k)
        prologue = [n for n in jj.body[:pos] if isinstance(n, Loop)]
        assert [lp.tag for lp in prologue] == ["copy_a", "copy_b"]
        epilogue = jj.body[pos + 1:]
        assert sum(1 for n in epilogue if getattr(n, "kind", None) is OpKind.WMMA_COMPUTE) == 64

    def test_copies_fetch_next_iteration(self):
        m = lower(problem(128), SMALL, stop="pipeline")
        k = find_loop(m.func.body, "k")
        a_read = next(op for op in ops_in(k.body) if op.buffer == "A")
        assert a_read.indices[1].evaluate({"k": 0, "ac": 0}) == SMALL.tbk

    def test_single_trip_is_noop_with_note(self):
        m = lower(problem(64, 64, 32), SMALL, stop="hoist")
        out, note = split_pipeline_with_note(m)
        assert out is m and "trip count 1" in note

    def test_semantics_ten_seeds(self):
        p = problem(128)
        m = lower(p, SMALL, stop="hoist")
        assert same_result(m, split_pipeline(m), p, seeds=range(10))


def barrier_positions(nodes):
    return [i for i, n in enumerate(nodes) if getattr(n, "kind", None) is OpKind.BARRIER]


class TestBarriers:
    def test_listing_four_placement(self):
        m = lower(problem(128), SMALL, stop="barriers")
        jj = find_loop(m.func.body, "jj")
        k = find_loop(m.func.body, "k")
        pos = jj.body.index(k)
        kinds = [getattr(n, "kind", None) for n in jj.body]
        assert kinds[pos - 1] is OpKind.BARRIER  # before the main loop, after the prologue copies
        first_copy = next(i for i, n in enumerate(jj.body) if isinstance(n, Loop))
        assert kinds[first_copy - 1] is OpKind.BARRIER  # before the prologue copies write shared memory
        assert kinds[pos + 1] is OpKind.BARRIER  # shared stores of the last iteration visible to the epilogue
        body = list(k.body)
        assert body[0].kind is OpKind.BARRIER
        last_copy = max(i for i, n in enumerate(body) if isinstance(n, Loop))
        assert body[last_copy - 2].kind is OpKind.BARRIER

    def test_no_shared_buffers_unchanged(self):
        m = lower(problem(128), SMALL, stop="tile")
        assert insert_barriers(m) is m

    def test_idempotent(self):
        m = lower(problem(128), SMALL, stop="barriers")
        assert insert_barriers(m) == m


class TestVectorize:
    @pytest.mark.parametrize("bits,width", [(32, 2), (64, 4), (128, 8)])
    def test_widths(self, bits, width):
        m = lower(problem(128), TileConfig(64, 64, 32, 32, 32, 8, 8, bits), stop="vectorize")
        inner = [lp for lp in loops_in(m.func.body) if str(lp.tag).endswith(".inner")]
        assert inner and all(lp.step == width for lp in inner)
        vt = {op.type.width for op in ops_in(m.func.body) if op.kind is OpKind.VECTOR_LOAD}
        assert vt == {width}

    def test_sixteen_bits_is_rejected(self):
        m = lower(problem(128), SMALL, stop="barriers")
        with pytest.raises(PassError):
            vectorize_copies(m, 16)

    def test_scalar_setting_is_identity(self):
        m = lower(problem(128), SMALL, stop="barriers")
        assert vectorize_copies(m, 0) is m

    def test_semantics(self):
        p = problem(128)
        m = lower(p, SMALL, stop="barriers")
        assert same_result(m, vectorize_copies(m, 128), p)


def outer_envs(module, target):
    """All bindings of the loops enclosing ``target``."""
    chain = []

    def find(nodes, path):
        for n in nodes:
            if n is target:
                chain.extend(path)
                return True
            if isinstance(n, Loop) and find(n.body, path + [n]):
                return True
        return False

    find(module.func.body, [])
    envs = [{}]
    for lp in chain:
        nxt = []
        for env in envs:
            lb, ub = int(lp.lower.evaluate(env)), int(lp.upper.evaluate(env))
            nxt.extend({**env, lp.iv: v} for v in range(lb, ub, lp.step))
        envs = nxt
    return envs


class TestParallelize:
    def test_naive(self):
        m = parallelize(build_naive_matmul(problem(8)))
        assert {lp.tag: bool(lp.attr("parallel")) for lp in loops_in(m.func.body)} == {
            "i": True, "j": True, "k": False}

    def test_pipeline_module(self):
        m = lower(problem(128), SMALL, stop="parallelize")
        par = {}
        for lp in loops_in(m.func.body):
            par.setdefault(lp.tag, set()).add(bool(lp.attr("parallel")))
        for tag in ("i", "j", "ii", "jj", "copy_a", "copy_b", "copy_a.inner", "copy_b.inner"):
            assert par[tag] == {True}, tag
        assert par["k"] == {False}

    def test_idempotent(self):
        m = lower(problem(128), SMALL, stop="parallelize")
        assert parallelize(m) is m

    @pytest.mark.parametrize("stop", ["tile", "copies", "wmma", "permute-outer", "unroll", "hoist", "barriers"])
    def test_brute_force_agrees(self, stop):
        p = problem(32, 32, 32)
        cfg = TileConfig(32, 32, 16, 16, 16, 8, 8, 32)
        m = parallelize(lower(p, cfg, stop=stop))
        checked = 0
        for lp in loops_in(m.func.body):
            if lp.trip_count is None or lp.trip_count < 2:
                continue
            assert bool(lp.attr("parallel")) == brute_force_parallel(lp, m, outer_envs(m, lp)), lp.tag
            checked += 1
        assert checked

    def test_brute_force_naive_8(self):
        m = parallelize(build_naive_matmul(problem(8)))
        for lp in loops_in(m.func.body):
            assert bool(lp.attr("parallel")) == brute_force_parallel(lp, m, outer_envs(m, lp))


@given(st.sampled_from(["cse", "barriers", "parallelize"]), st.sampled_from(["unroll", "hoist", "pipeline", "vectorize"]))
def test_idempotent_passes(pass_name, stop):
    fn = {"cse": cse, "barriers": insert_barriers, "parallelize": parallelize}[pass_name]
    m = lower(problem(128), SMALL, stop=stop)
    once = fn(m)
    assert fn(once) == once


def test_only_pad_changes_allocation():
    from wmmagen.pipeline import run_passes
    p = problem(128)
    result = run_passes(build_naive_matmul(p), SMALL, p)
    changed = [name for name, delta in result.report if "shared_bytes" in delta]
    assert changed == ["copies", "pad"]
