"""Measure what padding, vectorization and pipelining do on the machine model."""

import argparse
from dataclasses import replace

from wmmagen.cli import make_inputs, max_rel_error, reference
from wmmagen.ir import ProblemConfig, build_naive_matmul
from wmmagen.pipeline import run_passes
from wmmagen.sim import run_gpu
from wmmagen.transforms import TileConfig


def measure(problem, cfg, inputs, skip=()):
    kernel = run_passes(build_naive_matmul(problem), cfg, problem, skip=skip).module
    out, m = run_gpu(kernel, inputs)
    return m, max_rel_error(out["C"], reference(inputs))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p = ProblemConfig(args.size, args.size, args.size)
    inputs = make_inputs(p, args.seed)
    base = TileConfig(128, 128, 64, 64, 64, 8, 8, 128)
    rows = [
        ("pad 0", replace(base, padding_a=0, padding_b=0), ()),
        ("pad 8", base, ()),
        ("scalar copies", replace(base, vector_bits=0), ()),
        ("vec 32", replace(base, vector_bits=32), ()),
        ("vec 64", replace(base, vector_bits=64), ()),
        ("vec 128", base, ()),
        ("no pipelining", base, ("pipeline", "finalize-pipeline")),
        ("pipelining", base, ()),
    ]
    print(f"{'variant':<16}{'conflicts':>10}{'transactions':>14}{'requests':>10}{'stalls':>9}{'races':>7}{'rel err':>10}")
    for name, cfg, skip in rows:
        m, err = measure(p, cfg, inputs, skip)
        print(f"{name:<16}{m.bank_conflicts:>10}{m.global_transactions:>14}{m.global_requests:>10}"
              f"{m.stall_cycles:>9}{m.race_count:>7}{err:>10.1e}")


if __name__ == "__main__":
    main()
