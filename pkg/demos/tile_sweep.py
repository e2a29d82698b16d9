"""Sweep block and warp tile sizes and print the simulator table with resource estimates."""

import argparse

from wmmagen.analysis import analyze
from wmmagen.cli import RunConfig, bench_report
from wmmagen.ir import ProblemConfig
from wmmagen.transforms import TileConfig

SWEEP = [
    TileConfig(64, 64, 32, 32, 32),
    TileConfig(64, 64, 64, 32, 32),
    TileConfig(128, 64, 32, 64, 32),
    TileConfig(128, 128, 32, 64, 64),
    TileConfig(128, 128, 64, 64, 64),
    TileConfig(256, 128, 32, 64, 64),
    TileConfig(256, 256, 64, 64, 64),  # too much shared memory, listed as skipped
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()
    p = ProblemConfig(args.size, args.size, args.size)

    print(f"{'config':<28}{'shared':>8}{'regs':>6}{'warps':>6}{'blocks/SM':>10}")
    for cfg in SWEEP:
        r = analyze(None, cfg, p)
        tag = f"{cfg.tbm}x{cfg.tbn}x{cfg.tbk} w{cfg.wm}x{cfg.wn}"
        print(f"{tag:<28}{r.shared_bytes:>8}{r.est_registers_per_thread:>6}{r.warps_per_block:>6}"
              f"{r.est_blocks_per_sm:>10}" + ("" if r.legal else "  illegal"))
    print()
    bench = bench_report(RunConfig(p, SWEEP[0]), SWEEP)
    print(bench.table())


if __name__ == "__main__":
    main()
