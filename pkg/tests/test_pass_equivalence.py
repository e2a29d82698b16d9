"""Each affine pass preserves the sequential meaning of the module."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wmmagen.ir import build_naive_matmul
from wmmagen.pipeline import AFFINE_PASSES, run_passes
from wmmagen.sim import run_sequential
from wmmagen.transforms import TileConfig

from support import SMALL, TOLERANCE, make_inputs, max_rel_error, problem

# these reorder or reassociate floating-point additions, so they are compared with a tolerance
REORDERING = {"permute-inner", "unroll"}

P128 = problem(128)


@pytest.fixture(scope="module")
def stages_128():
    stages = {}
    run_passes(build_naive_matmul(P128), SMALL, P128, stop=AFFINE_PASSES[-1],
               on_pass=lambda name, st: stages.__setitem__(name, st))
    return stages


def previous(stages, name):
    idx = AFFINE_PASSES.index(name)
    return build_naive_matmul(P128) if idx == 0 else stages[AFFINE_PASSES[idx - 1]]


@pytest.mark.parametrize("name", AFFINE_PASSES)
def test_pass_preserves_result(stages_128, name):
    inputs = make_inputs(P128, seed=11)
    before = run_sequential(previous(stages_128, name), inputs)["C"]
    after = run_sequential(stages_128[name], inputs)["C"]
    if name in REORDERING:
        assert max_rel_error(after, before) <= TOLERANCE[P128.accum]
    else:
        assert np.array_equal(after, before)


def test_full_affine_pipeline_matches_reference(stages_128):
    from support import reference
    inputs = make_inputs(P128, seed=2)
    out = run_sequential(stages_128[AFFINE_PASSES[-1]], inputs)["C"]
    assert max_rel_error(out, reference(inputs)) <= TOLERANCE[P128.accum]


def test_lane_mode_agrees_with_scalar_order():
    p = problem(32)
    cfg = TileConfig(32, 32, 16, 16, 16)
    m = run_passes(build_naive_matmul(p), cfg, p, stop=AFFINE_PASSES[-1]).module
    inputs = make_inputs(p, seed=5)
    assert np.array_equal(run_sequential(m, inputs)["C"], run_sequential(m, inputs, lanes=False)["C"])


sizes = st.sampled_from([32, 64, 96])
tiles = st.sampled_from([
    TileConfig(32, 32, 16, 16, 16),
    TileConfig(32, 32, 32, 16, 32, 8, 8, 64),
    TileConfig(32, 32, 32, 32, 16, 0, 0, 128),
])


@settings(max_examples=15)
@given(sizes, sizes, sizes, tiles, st.sampled_from(["f32", "f16"]), st.integers(0, 2**16))
def test_random_configs_preserve_result(m, n, k, cfg, accum, seed):
    p = problem(m, n, k, accum)
    naive = build_naive_matmul(p)
    final = run_passes(naive, cfg, p, stop=AFFINE_PASSES[-1]).module
    inputs = make_inputs(p, seed)
    expect = run_sequential(naive, inputs)["C"]
    got = run_sequential(final, inputs)["C"]
    assert max_rel_error(got, expect) <= TOLERANCE[p.accum]


@settings(max_examples=10)
@given(st.sampled_from(AFFINE_PASSES), st.integers(0, 2**16))
def test_bit_identical_passes_any_seed(name, seed):
    p = problem(32, 32, 64)
    cfg = TileConfig(32, 32, 32, 16, 16)
    stages = {}
    run_passes(build_naive_matmul(p), cfg, p, stop=name, on_pass=lambda nm, st: stages.__setitem__(nm, st))
    idx = AFFINE_PASSES.index(name)
    before = build_naive_matmul(p) if idx == 0 else stages[AFFINE_PASSES[idx - 1]]
    inputs = make_inputs(p, seed)
    a = run_sequential(before, inputs)["C"]
    b = run_sequential(stages[name], inputs)["C"]
    if name in REORDERING:
        assert max_rel_error(b, a) <= TOLERANCE[p.accum]
    else:
        assert np.array_equal(a, b)
